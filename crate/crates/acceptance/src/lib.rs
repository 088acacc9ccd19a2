//! Holds the `acceptance` test target; the checks themselves live in `double_tower::acceptance`.
