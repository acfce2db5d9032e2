import os
import copy
import yaml

_config_sections = ['SOLVER', 'SHRINKAGE', 'CV', 'CLUSTERING', 'FIT', 'SIMULATION']

PATH_TO_DEFAULT_CONFIG = os.path.join(os.path.dirname(__file__), 'default_configs.yml')


class ConfigReader:
    """
    Reads a run configuration and verifies its content. Every command of the toolkit that
    accepts `--config` goes through this class instead of reading the YAML file directly.

    A configuration file may list any subset of the sections and keys of the default
    configuration (`sparseldatoolkit/configs/default_configs.yml`); whatever it omits keeps its
    default value. Unknown sections or keys are rejected, so a typo never passes silently.

    Note: If a section or key is added to the default configuration, the CLI's mapping from
    configuration to run settings must be reviewed as well.
    """
    def __init__(self, path_to_config: str = None,
                 path_to_defaults: str = PATH_TO_DEFAULT_CONFIG):
        self.path_to_config = path_to_config
        self.path_to_defaults = path_to_defaults

    def read(self) -> dict:
        """ Reads the configuration file and returns the defaults updated with its content. It
        evaluates the file before reading it in the following steps:

           - (1) checks if the file exists,
           - (2) checks if it is a 'yml' file,
           - (3) checks that its sections and keys all exist in the default configuration.

        Without a path, the defaults alone are returned.
        """
        configs = self.defaults()
        if self.path_to_config is None:
            return configs
        self.__assert_file()
        with open(self.path_to_config) as file:
            content = yaml.load(file, Loader=yaml.FullLoader) or {}
        self.__assert_content(content, configs)
        for section, values in content.items():
            configs[section].update(values or {})
        return configs

    def defaults(self) -> dict:
        with open(self.path_to_defaults) as file:
            return copy.deepcopy(yaml.load(file, Loader=yaml.FullLoader))

    def __assert_file(self):
        if not os.path.isfile(self.path_to_config):
            self.__invalid_path_msg()

        if not self.path_to_config.endswith('.yml'):
            self.__invalid_file_msg()

    def __assert_content(self, content: dict, defaults: dict):
        if not isinstance(content, dict) or not set(content).issubset(_config_sections):
            self.__invalid_content_msg(content)
        for section, values in content.items():
            if values is None:
                continue
            if not isinstance(values, dict) or not set(values).issubset(defaults[section]):
                self.__invalid_content_msg(content, section)

    def __invalid_path_msg(self):
        """ If os.path.isfile() fails, this method will raise a proper exception."""
        raise FileNotFoundError(
            '''
            The given file does NOT exist:
            \t{}
            For help, call `instruction()`.
            '''.format(self.path_to_config))

    def __invalid_file_msg(self):
        """ If the given path exists, but it does not end with '.yml' this method raises a
        proper exception."""
        raise FileNotFoundError(
            '''
            The given configuration file is NOT a YAML file:
            \t{}
            A configuration file must be a YAML file. For help, call `instruction()`.
            '''.format(self.path_to_config)
        )

    def __invalid_content_msg(self, content, section: str = None):
        """ If the file has a section or a key that the default configuration does not have,
        this method raises a proper exception."""
        where = 'section {}'.format(section) if section else 'top-level sections {}'.format(
            list(content) if isinstance(content, dict) else content)
        raise AssertionError(
            '''
            The keys in the following configuration file are NOT all valid keys
            ({}).
            {}
            For help, call `instruction()`.
            '''.format(where, self.path_to_config)
            )

    def instruction(self):
        print("""
        Below, an example configuration file is provided. Every section and key is
        optional; those that are left out keep the values shown here.
        ---------------------------------------------------------------------------
            SOLVER:
              lambda: 0.0           # the penalty; `cv` ignores it
              eps: 1.0e-6           # stopping threshold of the sweeps and outer loop
              max_outer: 30
              max_inner: 100
              seed: 0               # seed of the random sweep order
              diagonal_mode: false  # use diag(W) instead of the shrunken W
              kkt_tol: 1.0e-4
              compare_zero: true
            SHRINKAGE:
              tau_override: 'auto'  # or a number in [0, 1]
              p_dense: 2000
            CV:
              folds: 5
              grid_size: 30
              seed: 0
              rule: '1se'           # or 'min'
            CLUSTERING:
              enabled: false
              k: null               # null means ceil(p / 100)
              restarts: 100
              seed: 0
            FIT:
              strategy: 'all-groups-sequential'   # or 'merge-sequential'
              n_vectors: null
              eliminate: true
              standardize: false
              allow_nonconverged: false
            SIMULATION:
              structure: 'diagonal' # 'block_network', 'equicorrelation', 'external_matrix'
              p: 800
              r: 80
              n_train: 100
              n_test: 500
              seed: 0
              rho: 0.0
              covariance_path: null # CSV matrix, for 'external_matrix'
              n_blocks: null        # null scales with p
              n_cross_pairs: null
              replicates: 25        # used by 'bench'
        ---------------------------------------------------------------------------
        Note 1: Values given as command-line flags override those of the file.

        Note 2: tau_override set to 1 reproduces the diagonal within-group matrix and
        0 the plain sample matrix; 'auto' estimates one intensity per group.
        """)
