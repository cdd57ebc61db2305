from .harness import (  # noqa
    BENCH_KEY_BITS,
    BenchRecord,
    complexity_exponents,
    fit_exponent,
    run_benchmark,
    summarize,
    trial_pipeline,
)
from .report import CSV_COLUMNS, format_table, read_report, write_report  # noqa
