import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from affnet.errors import AxisError, NonFiniteError, ShapeError
from affnet.tensor import (as_tensor, complex_dtype_for, elementwise_binary, imag_part, make_complex,
                           real_dtype_for, real_part, reduce_sum)

small = st.floats(-1e3, 1e3, allow_nan=False, width=64)
shapes = hnp.array_shapes(min_dims=1, max_dims=3, max_side=5)


class TestElementwise:
    def test_mul_example(self):
        out = elementwise_binary(np.array([1.0, 2.0]), np.array([3.0, 4.0]), "mul")
        np.testing.assert_array_equal(out, [3.0, 8.0])

    def test_complex_mul_is_modulus_squared(self):
        a = (1 + 1j) * np.ones(2)
        b = (1 - 1j) * np.ones(2)
        np.testing.assert_array_equal(elementwise_binary(a, b, "mul"), 2 * np.ones(2))

    def test_add_zero_is_identity(self, rng):
        x = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(elementwise_binary(x, np.zeros_like(x), "add"), x)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            elementwise_binary(np.ones(2), np.ones(3), "add")

    def test_no_broadcasting(self):
        with pytest.raises(ShapeError):
            elementwise_binary(np.ones((2, 3)), np.ones(3), "add")

    def test_mixed_real_complex(self):
        with pytest.raises(TypeError):
            elementwise_binary(np.ones(2), np.ones(2, complex), "mul")

    def test_unknown_op(self):
        with pytest.raises(ValueError):
            elementwise_binary(np.ones(2), np.ones(2), "div")

    def test_overflow_is_an_error(self):
        with pytest.raises(NonFiniteError):
            elementwise_binary(np.array([1e308]), np.array([1e308]), "mul")

    @given(hnp.arrays(np.float64, st.shared(shapes, key="s"), elements=small),
           hnp.arrays(np.float64, st.shared(shapes, key="s"), elements=small))
    def test_commutative(self, a, b):
        for op in ("add", "mul"):
            np.testing.assert_array_equal(elementwise_binary(a, b, op), elementwise_binary(b, a, op))

    @given(hnp.arrays(np.int64, (6,), elements=st.integers(-1000, 1000)),
           hnp.arrays(np.int64, (6,), elements=st.integers(-1000, 1000)),
           hnp.arrays(np.int64, (6,), elements=st.integers(-1000, 1000)))
    def test_associative_on_exact_values(self, a, b, c):
        a, b, c = (v.astype(np.float64) for v in (a, b, c))
        for op in ("add", "mul"):
            lhs = elementwise_binary(elementwise_binary(a, b, op), c, op)
            rhs = elementwise_binary(a, elementwise_binary(b, c, op), op)
            np.testing.assert_array_equal(lhs, rhs)


class TestReduceSum:
    def test_single_axis(self):
        np.testing.assert_array_equal(reduce_sum(np.array([[1.0, 2.0], [3.0, 4.0]]), {1}), [3.0, 7.0])

    def test_all_axes(self):
        assert reduce_sum(np.ones((4, 4)), {0, 1}) == 16

    def test_empty_axes_is_copy(self, rng):
        x = rng.standard_normal((2, 3))
        out = reduce_sum(x, ())
        np.testing.assert_array_equal(out, x)
        assert out is not x

    @pytest.mark.parametrize("axes", [(2,), (-3,), (0, 0), (1, -1)])
    def test_invalid_axes(self, axes):
        with pytest.raises(AxisError):
            reduce_sum(np.ones((2, 3)), axes)


class TestComplexConversions:
    def test_real_and_imag(self):
        assert real_part(np.array(3 + 4j)) == 3
        assert imag_part(np.array(3 + 4j)) == 4

    def test_make_complex_roundtrip_real(self, rng):
        x = rng.standard_normal((2, 5))
        np.testing.assert_array_equal(real_part(make_complex(x, np.zeros_like(x))), x)

    def test_imag_of_make_complex(self, rng):
        a, b = rng.standard_normal((2, 3, 3))
        np.testing.assert_array_equal(imag_part(make_complex(a, b)), b)

    def test_make_complex_shape_mismatch(self):
        with pytest.raises(ShapeError):
            make_complex(np.ones(2), np.ones(3))

    def test_make_complex_rejects_complex(self):
        with pytest.raises(TypeError):
            make_complex(np.ones(2, complex), np.ones(2))

    def test_precision_follows_inputs(self):
        assert make_complex(np.ones(2, np.float32), np.ones(2, np.float32)).dtype == np.complex64
        assert complex_dtype_for(np.float64) == np.complex128
        assert real_dtype_for(np.complex64) == np.float32

    @given(hnp.arrays(np.complex128, shapes,
                      elements=st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False)))
    def test_roundtrip_any_complex(self, z):
        np.testing.assert_array_equal(make_complex(real_part(z), imag_part(z)), z)


class TestAsTensor:
    def test_contiguous(self):
        x = np.ones((4, 4))[:, ::2]
        assert as_tensor(x).flags.c_contiguous

    def test_zero_dim_rejected(self):
        with pytest.raises(ShapeError):
            as_tensor(np.ones((0, 3)))
