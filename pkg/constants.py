INDEX_TICKER = "SPX"

# Market metrics
RISK_FREE_RATE = 0.0
PERIODS_PER_YEAR = 252
MONTHS_PER_YEAR = 12
METRIC_WINDOWS_MONTHS = (3, 6, 12)

# Peer similarity
PEER_COUNT = 5
EMBEDDING_DIM = 256

# Summarizers
N_QUARTERS = 2
LLM_TEMPERATURE = 0.0
LLM_MAX_RETRIES = 3
LLM_BACKOFF_SECONDS = 1.0
LLM_TIMEOUT = 60
LLM_MAX_IN_FLIGHT = 4
LLM_CONTEXT_CHARS = 48_000
MACRO_CADENCE_DAYS = 14

# Signal engine
SIGNAL_HORIZON = "one month"
GPT_SCORE_THRESHOLD = 7
SCORE_MIN = 0
SCORE_MAX = 10

# Evaluation lab
BOOTSTRAP_SAMPLES = 10_000
BOOTSTRAP_CHUNK = 500
MASTER_SEED = 7
RNG_NAME = "numpy.random.PCG64"

# Backtester
COST_BPS = 5.0
MA_WINDOW_DAYS = 200
SHARPE_LOOKBACK_DAYS = 252
TOP_N = 10

# Run harness
HEARTBEAT_INTERVAL = 5.0
COMPONENT_VERSIONS = {
    "market-metrics": "1.0.0",
    "peer-similarity": "1.0.0",
    "summarizer-pipeline": "1.0.0",
    "signal-engine": "1.0.0",
    "evaluation-lab": "1.0.0",
    "backtester": "1.0.0",
    "cli-io": "1.0.0",
}

# CLI exit codes
EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_USAGE = 2
EXIT_NOTHING_TO_REPORT = 3
EXIT_CRASH = 70
