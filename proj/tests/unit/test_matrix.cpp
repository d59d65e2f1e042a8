#include <cmath>
#include <limits>

#include "doctest.h"
#include "lrcssm/matrix.hpp"

using namespace lrcssm;

TEST_CASE("matrix is row-major with row spans") {
  Matrix m(2, 3);
  m(1, 2) = 5.0;
  CHECK(m.flat()[5] == 5.0);
  CHECK(m.row(1)[2] == 5.0);
  CHECK(m.size() == 6);
  Matrix n(2, 3);
  CHECK_FALSE(m == n);
  n(1, 2) = 5.0;
  CHECK(m == n);
}

TEST_CASE("matvec and affine_rows agree with hand values") {
  Matrix w(2, 2);
  w(0, 0) = 1; w(0, 1) = 2; w(1, 0) = 3; w(1, 1) = 4;
  Vector x{1.0, -1.0}, y(2);
  matvec(w, x, y);
  CHECK(y[0] == -1.0);
  CHECK(y[1] == -1.0);

  Matrix in(1, 2);
  in(0, 0) = 1.0; in(0, 1) = 1.0;
  Matrix out(1, 2);
  affine_rows(in, w, Vector{0.5, -0.5}, out);
  CHECK(out(0, 0) == 3.5);
  CHECK(out(0, 1) == 6.5);
}

TEST_CASE("max_abs_diff propagates NaN") {
  Vector a{0.0, 1.0}, b{0.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK(std::isnan(max_abs_diff(a, b)));
  CHECK(max_abs_diff(a, a) == 0.0);
  CHECK(norm2(Vector{3.0, 4.0}) == doctest::Approx(5.0));
}
