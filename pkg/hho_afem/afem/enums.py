from enum import Enum


class ProblemId(str, Enum):
    """
    Shipped benchmark problems.
    """

    PLAPLACE_SQUARE = "plaplace-square"
    PLAPLACE_LSHAPE = "plaplace-lshape"
    ODP_SQUARE = "odp-square"
    ODP_LSHAPE = "odp-lshape"
    TWOWELL = "twowell"

    def __str__(self):
        return self.value

