import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# No request handling happens in this project, the key only satisfies Django's startup checks.
SECRET_KEY = os.environ.get('POSELIFT_SECRET_KEY', 'poselift-insecure-dev-key')

DEBUG = os.environ.get('POSELIFT_DEBUG', '') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'skeletons.apps.SkeletonsConfig',
    'priors.apps.PriorsConfig',
    'synth.apps.SynthConfig',
    'training.apps.TrainingConfig',
    'evaluation.apps.EvaluationConfig',
]

# Artifacts are file based; there is no database.
DATABASES = {}

USE_TZ = True

TIME_ZONE = 'UTC'


# Logging
LOG_LEVEL = os.environ.get('POSELIFT_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        app: {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False}
        for app in ('skeletons', 'priors', 'synth', 'training', 'evaluation')
    },
}


# Skeleton model and camera
POSE_TOPOLOGY = 'humanoid-9'
POSE_DEPTH_ANCHOR = 10.0
# Normalized pose units -> image frame / camera tangent units
POSE_FRAME_SCALE = 0.2
POSE_DEPTH_EPSILON = 1e-3
POSE_DEPTH_SHARPNESS = 10.0

# Skeleton renderer: value 0.5 at ~1.5 px from a bone (ln 2 / 1.5**2)
RENDERER_RESOLUTION = (64, 64)
RENDERER_GAMMA = 0.308

# 2D pose prior
FLOW_COMPONENTS = {
    'humanoid-17': 16,
    'humanoid-9': 10,
    'hand-21': 16,
}
FLOW_COUPLING_LAYERS = 8
FLOW_HIDDEN_UNITS = 64
FLOW_SCALE_LIMIT = 2.0
FLOW_EPOCHS = 50
FLOW_BATCH_SIZE = 256
FLOW_LEARNING_RATE = 1e-3
FLOW_HOLDOUT_FRACTION = 0.1

# Losses (composite objective)
LOSS_WEIGHTS = {
    'adversarial': 1.0,
    'omega': 1.0,
    'base': 1.0,
    'flow_nll': 1.0,
    'bone_length': 1.0,
}
LOSS_OMEGA_LAMBDA = 0.1
LOSS_BONE_SIGMA = 0.1

# Training
TRAIN_STEPS = 50000
TRAIN_BATCH_SIZE = 64
TRAIN_LR_GENERATOR = 2e-4
TRAIN_LR_DISCRIMINATOR = 1e-4
TRAIN_EVAL_EVERY = 1000
TRAIN_CHECKPOINT_EVERY = 1000
LIFTER_WIDTH = 512
LIFTER_BLOCKS = 2

# Evaluation
EVAL_PCK_THRESHOLD = 150.0
EVAL_AUC_STEPS = 31
# Synthetic units -> reporting units (a humanoid-9 figure is ~3.4 units tall)
EVAL_UNIT_SCALE = 500.0
EVAL_BATCH_SIZE = 256
EVAL_FIGURE_VIEWS = (0.0, 90.0)

# Synthetic world
SYNTH_COUNTS = {'train': 20000, 'prior': 20000, 'val': 0, 'test': 2000}
SYNTH_ELEVATION = (0.15, 0.1)
SYNTH_CLUTTER = {
    'ellipse_count': 4,
    'ellipse_intensity': 0.5,
    'noise_amplitude': 0.1,
}
