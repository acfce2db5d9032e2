import os
import numpy as np
import pandas as pd
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import seaborn as sns

from sparseldatoolkit.theory.theory import PathTable


class PathVisualizer:
    """
    Plots of a solution path and of discriminant scores: the number of selected features
    against lambda, with the theoretical sparsity floor drawn as a horizontal line, and a strip
    plot of the scores of every group.
    """

    def __init__(self, path_table: PathTable = None, path_to_path_csv: str = None):
        """
        :param path_table: A table returned by `theory.solution_path`.
        :param path_to_path_csv: Alternatively, a CSV with columns 'lambda' and 'support_size'
                                 as written by `PathTable.to_csv`.
        """
        if path_table is not None and path_to_path_csv is not None:
            raise ValueError(
                """
                Both of the arguments, `path_table` and `path_to_path_csv`, cannot be given at
                the same time!
                """
            )
        self.path_to_path_csv = path_to_path_csv
        if path_to_path_csv is not None:
            self.__verify_path()
            self.path_df = pd.read_csv(path_to_path_csv)
        elif path_table is not None:
            self.path_df = path_table.to_frame()
        else:
            self.path_df = pd.DataFrame(columns=['lambda', 'support_size'])

    def __verify_path(self):
        if not os.path.isfile(self.path_to_path_csv):
            raise ValueError(
                """
                The given path (printed below) does not exist!
                \t{}
                """.format(self.path_to_path_csv)
            )
        if not self.path_to_path_csv.endswith('.csv'):
            raise ValueError(
                """
                The given file (printed below) is not a CSV file!
                \t{}
                """.format(self.path_to_path_csv)
            )

    def plot_support_path(self, floor: int = None, drop_lambda: float = None,
                          output_path: str = None):
        """
        Draws the support size against lambda.

        :param floor: If given, the lower bound max(m' + 1, m_lambda) drawn as a dashed line.
        :param drop_lambda: If given, the located drop to zero drawn as a vertical line.
        :param output_path: If given, the plot is stored there (as PNG) instead of shown.

        :return: The figure.
        """
        if self.path_df.empty:
            raise ValueError(
                """
                The path is empty; nothing to plot.
                """
            )
        sns.set(style="ticks")
        fig, ax = plt.subplots(figsize=(8, 5))
        sns.lineplot(x='lambda', y='support_size', data=self.path_df, drawstyle='steps-post',
                     marker='o', markersize=3, ax=ax)
        if floor is not None:
            ax.axhline(floor, linestyle='--', color='firebrick', linewidth=1,
                       label='floor = {}'.format(floor))
        if drop_lambda is not None:
            ax.axvline(drop_lambda, linestyle=':', color='gray', linewidth=1,
                       label='drop at {:.4g}'.format(drop_lambda))
        if floor is not None or drop_lambda is not None:
            ax.legend(loc='upper right')
        ax.xaxis.grid(True, which='major', linestyle='dotted', linewidth='0.5', color='gray')
        sns.despine(trim=True)
        ax.set_title('Number of Selected Features', fontsize=16)
        ax.set_xlabel('lambda', fontsize=12)
        ax.set_ylabel('support size', fontsize=12)
        return self.__finish(fig, output_path)

    @staticmethod
    def plot_scores(scores: np.ndarray, labels, label_names=None, output_path: str = None):
        """
        Draws the discriminant scores of every sample, one strip per group. With two or more
        score columns, the first two are drawn as a scatter plot instead.

        :param scores: An (n x d) score matrix, e.g. the second output of `predict`.
        :param labels: Group index of every row.
        :param label_names: Optional group names, indexed by group index.
        :param output_path: If given, the plot is stored there (as PNG) instead of shown.

        :return: The figure.
        """
        scores = np.atleast_2d(np.asarray(scores, dtype=float))
        if scores.shape[0] == 1 and scores.shape[1] != 1:
            scores = scores.T
        labels = np.asarray(labels)
        names = [label_names[i] for i in labels] if label_names is not None else labels
        sns.set(style="ticks")
        fig, ax = plt.subplots(figsize=(8, 5))
        if scores.shape[1] == 1:
            df = pd.DataFrame({'score': scores[:, 0], 'group': names})
            sns.stripplot(x='score', y='group', data=df, size=3, jitter=True, palette='vlag',
                          ax=ax)
            ax.set_xlabel('score', fontsize=12)
            ax.set_ylabel('')
        else:
            df = pd.DataFrame({'score 1': scores[:, 0], 'score 2': scores[:, 1], 'group': names})
            sns.scatterplot(x='score 1', y='score 2', hue='group', data=df, s=15, ax=ax)
        sns.despine(trim=True, left=True)
        ax.set_title('Discriminant Scores', fontsize=16)
        return PathVisualizer.__finish(fig, output_path)

    @staticmethod
    def __finish(fig, output_path: str = None):
        if output_path:
            if not output_path.endswith('.png'):
                output_path += '.png'
            fig.savefig(output_path, dpi=200)
            plt.close(fig)
        else:
            plt.show()
        return fig
