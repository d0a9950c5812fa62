"""Shared desk-scale experiment fixtures.

The synthetic classes overlap (mean separation 2 sigma) so that label skew
actually hurts a small MLP; with well-separated classes every strategy
saturates near 100% and no ordering is visible.
"""

from fedgroup.config import parse_config

# five labels, five groups: one device per label each round under FLDG
ORDERING = dict(
    dataset="synthetic", classes=5, input_dim=4, per_class=1000, test_per_class=400,
    sigma=3.0, separation=2.0, spread=1.0,
    N=20, K=5, R=50, per_device=200, E=5, lr=0.1, batch_size=50, hidden=(32,),
    h=5, r=3.0,
)

# ten labels so that K can range up to the label count in the group sweep
GROUP_SWEEP = dict(
    ORDERING, classes=10, input_dim=8, per_class=600, test_per_class=200, separation=2.5,
    case="case1", strategy="fldg", R=30,
)

# four labels, twenty devices, for the grouping-purity check
PURITY = dict(ORDERING, classes=4, K=4, test_per_class=50, case="case1")


def config(base, **kw):
    return parse_config(overrides={**base, **kw})
