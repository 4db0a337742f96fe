import os

app_name = "miniform"
app_title = "Miniform"
app_publisher = "Miniform"
app_description = "Batch-mode symbolic manipulation kernel"
app_email = ""
app_license = "mit"

# Setup defaults
# ------------------
# Every value can be overridden by a setup file or on the command line.

setup_defaults = {
    "max_term_size": 10000,
    "sort_buffer": None,
    "sort_patches": 16,
    "merge_fan_in": 16,
    "bracket_index_cap": 2**20,
    "spill_dir": None,
    "repeat_limit": 100000,
    "threads": 1,
    "statistics": True,
}

# FORM-style setup keys mapped onto RunConfig fields
setup_aliases = {
    "maxtermsize": "max_term_size",
    "sortbuffer": "sort_buffer",
    "sortpatches": "sort_patches",
    "fanin": "merge_fan_in",
    "bracketindexsize": "bracket_index_cap",
    "tempdir": "spill_dir",
    "incdir": "include_path",
    "path": "include_path",
    "repeatlimit": "repeat_limit",
    "threads": "threads",
}

# Procedure library
# ------------------
# Always searched last for #include and #call.

library_dir = os.path.join(os.path.dirname(__file__), "procedures")

# Builtin objects
# ------------------

builtin_functions = ("sum_", "count_", "sig_", "abs_")
builtin_sets = ("number_", "symbol_", "index_", "integer_")
levi_civita = "e_"

# Parallel-only statements, compiled as ModuleOption and never executed
parallel_statements = ("moduleoption", "parallel", "noparallel")

# Module options accepted and ignored in a sequential run
parallel_options = ("parallel", "noparallel", "polyfun")

# $-variable merge modes understood by moduleoption
merge_modes = ("sum", "maximum", "minimum", "local")
