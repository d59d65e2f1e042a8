#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "doctest.h"
#include "lrcssm/scan.hpp"
#include "oracles.hpp"

using namespace lrcssm;

namespace {

AffineSequence random_sequence(std::size_t T, std::size_t D, std::mt19937_64& rng) {
  return {oracle::random_matrix(T, D, rng), oracle::random_matrix(T, D, rng)};
}

double max_rel(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, oracle::rel_err(a.data()[k], b.data()[k], 1.0));
  return worst;
}

std::size_t ceil_log2(std::size_t n) {
  std::size_t k = 0;
  while ((std::size_t{1} << k) < n) ++k;
  return k;
}

}  // namespace

TEST_CASE("indexed scan preserves order for a non-commutative operator") {
  for (std::size_t block : {2u, 3u, 5u, 64u})
    for (std::size_t n = 0; n <= 300; n += (n < 40 ? 1 : 17)) {
      std::vector<std::string> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::string(1, static_cast<char>('a' + i % 26));
      std::vector<std::string> expect(n);
      std::string acc;
      for (std::size_t i = 0; i < n; ++i) expect[i] = acc += v[i];
      inclusive_scan_indexed(n, [&](std::size_t e, std::size_t l) { v[l] = v[e] + v[l]; }, block);
      CHECK(v == expect);
    }
}

TEST_CASE("reverse indexed scan folds from the back") {
  const std::size_t n = 200;
  std::vector<std::string> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::string(1, static_cast<char>('a' + i % 26));
  std::vector<std::string> expect(n);
  std::string acc;
  for (std::size_t i = n; i-- > 0;) expect[i] = acc = v[i] + acc;
  reverse_scan_indexed(n, [&](std::size_t later, std::size_t earlier) { v[earlier] = v[earlier] + v[later]; }, 7);
  CHECK(v == expect);
}

TEST_CASE("prefix_scan_affine equals the sequential fold") {
  std::mt19937_64 rng(101);
  for (std::size_t T : {1u, 2u, 3u, 7u, 8u, 63u, 64u, 65u, 127u, 128u, 129u, 1023u, 1024u, 1025u, 5000u})
    for (std::size_t D : {1u, 3u}) {
      const auto seq = random_sequence(T, D, rng);
      const auto x0 = oracle::random_vector(D, rng);
      const auto got = prefix_scan_affine(seq, x0);
      const auto ref = oracle::sequential_fold(seq.a, seq.c, x0);
      CHECK(max_rel(got.states, ref) <= 1e-10);
    }
}

TEST_CASE("element-list overload agrees with the array overload") {
  std::mt19937_64 rng(7);
  const auto seq = random_sequence(300, 2, rng);
  std::vector<AffineElement> elems;
  for (std::size_t t = 0; t < 300; ++t)
    elems.push_back({Vector(seq.a.row(t).begin(), seq.a.row(t).end()), Vector(seq.c.row(t).begin(), seq.c.row(t).end())});
  const Vector x0{0.5, -0.5};
  CHECK(prefix_scan_affine(std::span<const AffineElement>(elems), x0).states == prefix_scan_affine(seq, x0).states);
}

TEST_CASE("affine_compose is associative and has an identity") {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    AffineElement e[3];
    for (auto& x : e) x = {oracle::random_vector(2, rng), oracle::random_vector(2, rng)};
    const auto l = affine_compose(affine_compose(e[0], e[1]), e[2]);
    const auto r = affine_compose(e[0], affine_compose(e[1], e[2]));
    for (std::size_t i = 0; i < 2; ++i) {
      worst = std::max(worst, std::abs(l.a[i] - r.a[i]));
      worst = std::max(worst, std::abs(l.c[i] - r.c[i]));
    }
  }
  CHECK(worst <= 1e-12);

  const AffineElement e{{2.0}, {3.0}};
  const auto id = AffineElement::identity(1);
  CHECK(affine_compose(e, id).a == e.a);
  CHECK(affine_compose(id, e).c == e.c);
  // first then second: x -> 5 (2x + 3) + 1
  const auto fs = affine_compose(e, AffineElement{{5.0}, {1.0}});
  CHECK(fs.a[0] == 10.0);
  CHECK(fs.c[0] == 16.0);
}

TEST_CASE("reverse_scan_affine equals the backward recursion") {
  std::mt19937_64 rng(9);
  for (std::size_t T : {1u, 2u, 65u, 1000u}) {
    const auto seq = random_sequence(T, 3, rng);
    Matrix ref(T, 3);
    for (std::size_t t = T; t-- > 0;)
      for (std::size_t i = 0; i < 3; ++i) ref(t, i) = seq.c(t, i) + (t + 1 < T ? seq.a(t, i) * ref(t + 1, i) : 0.0);
    CHECK(max_rel(reverse_scan_affine(seq).states, ref) <= 1e-10);
  }
}

TEST_CASE("sync rounds stay within 2 ceil(log2 T)") {
  std::mt19937_64 rng(13);
  for (std::size_t T = 2; T <= (1u << 14); T *= 2)
    for (std::size_t delta : {0u, 1u}) {
      const std::size_t n = T + delta;
      const auto seq = random_sequence(n, 1, rng);
      const auto st = prefix_scan_affine(seq, Vector{0.0}).stats;
      CHECK(st.sync_rounds <= 2 * ceil_log2(n));
      CHECK(st.sync_rounds >= 1);
    }
  CHECK(prefix_scan_affine(random_sequence(1, 1, rng), Vector{0.0}).stats.sync_rounds == 0);
}

TEST_CASE("results are bitwise identical for any thread count") {
  std::mt19937_64 rng(21);
  const auto seq = random_sequence(20000, 4, rng);
  const auto x0 = oracle::random_vector(4, rng);
  const int saved = num_threads();
  set_num_threads(1);
  const auto one = prefix_scan_affine(seq, x0).states;
  set_num_threads(4);
  const auto four = prefix_scan_affine(seq, x0).states;
  set_num_threads(saved);
  CHECK(one == four);
}
