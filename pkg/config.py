import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Config:
    # Logging Configuration
    LOG_LEVEL = os.getenv('ROBUSTCF_LOG', 'WARNING').upper()
    LOG_FILE = os.getenv('ROBUSTCF_LOG_FILE')

    # Parallelism (step-4 bisection and protocol trials)
    N_JOBS = int(os.getenv('ROBUSTCF_N_JOBS', '1'))

    # Explainer defaults
    BETA = 0.5
    GAMMA = 0.1
    ALPHA_SMALL = 50
    ALPHA_LARGE = 1000
    LARGE_DATASET_ROWS = 1000
    MAX_COUNTERFACTUALS = 5

    # Robustness protocol defaults
    SIGMA = 0.05  # normalized feature space
    REPETITIONS = 3
    N_INPUTS = 20
    N_TUNING_INPUTS = 50  # drawn from the train split
    MAX_RETRIES = 100

    # Data and training defaults
    TEST_SIZE = 0.25
    EPOCHS = 100
    BATCH_SIZE = 8
    LEARNING_RATE = 0.01
    HIDDEN_LAYERS = (20, 10)

    # Exhaustive verification
    MAX_GRID_POINTS = 10_000
    MEMBERSHIP_TOL = 1e-9

    # Output files
    SCHEMA_VERSION = 1

    @classmethod
    def default_alpha(cls, n_rows: int) -> int:
        """Number-based step-2 cutoff for a dataset of the given size."""
        return cls.ALPHA_SMALL if n_rows < cls.LARGE_DATASET_ROWS else cls.ALPHA_LARGE
