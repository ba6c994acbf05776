"""Regenerate the golden HGMC files under crates/core/tests/data."""

import os
import sys

sys.path.insert(0, os.path.dirname(__file__))
import coeffio  # noqa: E402

DATA = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "data")

COEFFS = [
    0.1, -0.0, 1.0 / 3.0, 5e-324,
    -2.5, 1e300, -1e-300, 42.0,
    3.141592653589793, -7.25, 0.0, 2.0**-20,
]
VECTOR = [1.0, -1.0, 0.5, 1e-12, 123456.789]


def main():
    coeffio.write(
        os.path.join(DATA, "golden_coeffs.hgmc"),
        1, 3, 4, COEFFS,
        {
            "basis_id": "ica400",
            "dataset_id": "garments-1k",
            "preprocess": "logit:0.001:1",
            "seed": "7",
            "created": "0",
        },
    )
    coeffio.write(os.path.join(DATA, "golden_vector.hgmc"), 3, 5, 1, VECTOR, {"content": "weights"})


if __name__ == "__main__":
    main()
