import os
import logging

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = 'SPARSE_FLDA_THREADS'


def resolve_threads(threads: int = None) -> int:
    """
    Decides how many workers a pool may use. An explicit value wins; otherwise the environment
    variable `SPARSE_FLDA_THREADS` is consulted; otherwise all available cores are used.

    :param threads: The requested number of workers, or None.

    :return: A positive integer.
    """
    if threads is None:
        env_value = os.environ.get(THREADS_ENV_VAR)
        if env_value:
            try:
                threads = int(env_value)
            except ValueError:
                raise ValueError(
                    '''
                    The environment variable {} must be a positive integer, but it is:
                    \t{}
                    '''.format(THREADS_ENV_VAR, env_value))
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError(
            '''
            The number of threads must be at least 1. Given: {}
            '''.format(threads))
    logger.debug('worker pool capped at %d', threads)
    return threads


def split(items: list, n_of_partitions: int) -> list:
    """
    Splits the given list into `n_of_partitions` contiguous chunks whose lengths differ by at
    most one. The chunks keep the original order, so concatenating them gives back the input.

    :param items: The list to be partitioned.
    :param n_of_partitions: Number of chunks. If it exceeds the length of the list, the trailing
                            chunks are empty.

    :return: A list of `n_of_partitions` lists.
    """
    if n_of_partitions < 1:
        raise ValueError(
            '''
            The number of partitions must be at least 1. Given: {}
            '''.format(n_of_partitions))
    k, m = divmod(len(items), n_of_partitions)
    return [items[i * k + min(i, m):(i + 1) * k + min(i + 1, m)]
            for i in range(n_of_partitions)]
