"""Worked example: K=4 users, L=2 antennas, five STUs."""

import numpy as np

from locache.pda import parse_lapda

Q_QUARTER = """\
* 1 1 2
* 3 2 3
* 6 8 10
1 * 4 4
5 * 6 5
6 * 9 11
2 4 * 7
7 8 * 9
8 9 * 12
3 5 7 *
10 10 11 *
12 11 12 *
"""

Q_HALF = """\
* * 2 1
1 * * 2
2 1 * *
* 2 1 *
"""

Q_THREE_QUARTERS = """\
* * * 1
1 * * *
* 1 * *
* * 1 *
"""

EXAMPLE_LAPDA = (
    "lapda K=4 L=2 S=5\n"
    "stu 1 m=1/4 F=12 N=12\n" + Q_QUARTER
    + "stu 2 m=1/2 F=4 N=2\n" + Q_HALF
    + "stu 3 m=3/4 F=4 N=1\n" + Q_THREE_QUARTERS
    + "stu 4 m=1/2 F=4 N=2\n" + Q_HALF
    + "stu 5 m=1/4 F=12 N=12\n" + Q_QUARTER
)

EXAMPLE_RATES = (3000, 2000, 1000, 2000, 3000)
EXAMPLE_MEMORY = ("1/4", "1/2", "3/4", "1/2", "1/4")


def example_lapda():
    return parse_lapda(EXAMPLE_LAPDA)


def _rows(*blocks):
    return np.array([r for count, row in blocks for r in [row] * count], dtype=np.int64)


# FM matrices for requests (1, 2, 3, 4), one per user
FM_USER1 = np.diag([0, 0, 0] + [2] * 9)
FM_USER2 = _rows((3, (0, 0, 0, 2)), (3, (0, 0, 0, 0)), (3, (0, 0, 2, 0)),
                 (1, (0, 0, 0, 2)), (1, (0, 0, 2, 0)), (1, (0, 0, 1, 1)))
FM_USER3 = _rows((6, (0, 0, 0, 2)), (3, (0, 0, 0, 0)), (3, (0, 0, 0, 2)))
FM_USER4 = _rows((3, (2, 0, 0, 0)), (1, (0, 2, 0, 0)), (1, (1, 1, 0, 0)),
                 (1, (2, 0, 0, 0)), (3, (0, 2, 0, 0)), (3, (0, 0, 0, 0)))
