import os

ROOT = os.path.dirname(__file__)
PATH_TO_DEFAULT_CONFIG = os.path.join(ROOT, 'sparseldatoolkit/configs/default_configs.yml')
PATH_TO_TEST_DATA = os.path.join(ROOT, 'tests/test_dataset')
PATH_TO_TEST_CONFIGS = os.path.join(ROOT, 'tests/configs')
