from .config import ALGORITHMS, RunConfig, load_config, parse_config
from .runner import (
    SchemaError,
    ablation_kc,
    build_setup,
    compare_algorithms,
    emit_plot_data,
    read_table,
    run_experiment,
    run_single,
    validate,
)
