#include <cmath>
#include <cstdint>
#include <filesystem>

#include "doctest.h"
#include "dpx/io.hpp"
#include "dpx/ops.hpp"
#include "dpx/rng.hpp"

using dpx::Tensor;

TEST_SUITE("tensor") {

TEST_CASE("matmul by the identity returns the operand") {
  const Tensor<double> a({2, 2}, {1.5, -2, 0.25, 7});
  CHECK(dpx::matmul(Tensor<double>::identity(2), a) == a);
}

TEST_CASE("matmul hand example") {
  const Tensor<double> a({2, 2}, {1, 2, 3, 4});
  const Tensor<double> b({2, 1}, {5, 6});
  CHECK(dpx::matmul(a, b) == Tensor<double>({2, 1}, {17, 39}));
}

TEST_CASE("matmul matches a triple loop") {
  dpx::Rng rng(11);
  const auto a = rng.normal_tensor<double>({7, 5}, 1.0);
  const auto b = rng.normal_tensor<double>({5, 3}, 1.0);
  const auto c = dpx::matmul(a, b);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a.at(i, k) * b.at(k, j);
      CHECK(std::abs(c.at(i, j) - s) < 1e-12);
    }
}

TEST_CASE("matmul rejects mismatched extents and names both shapes") {
  const Tensor<double> a({2, 3}), b({2, 2});
  try {
    dpx::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const dpx::DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("softmax of a uniform row") {
  const auto s = dpx::softmax(Tensor<double>({3}, {0, 0, 0}), 0);
  for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("softmax over an axis of extent one is all ones") {
  dpx::Rng rng(2);
  const auto s = dpx::softmax(rng.normal_tensor<double>({4, 1}, 3.0), 1);
  CHECK(s == Tensor<double>::ones({4, 1}));
}

TEST_CASE("softmax matches the max-subtracted formula") {
  dpx::Rng rng(3);
  const auto x = rng.normal_tensor<double>({4, 6}, 2.0);
  const auto s = dpx::softmax(x, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    double mx = x.at(i, 0), total = 0;
    for (std::size_t j = 1; j < 6; ++j) mx = std::max(mx, x.at(i, j));
    for (std::size_t j = 0; j < 6; ++j) total += std::exp(x.at(i, j) - mx);
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(s.at(i, j) - std::exp(x.at(i, j) - mx) / total) < 1e-12);
  }
}

TEST_CASE("softmax rejects infinities") {
  CHECK_THROWS_AS(dpx::softmax(Tensor<double>({2}, {0, INFINITY}), 0), dpx::DomainError);
  CHECK_THROWS_AS(dpx::softmax(Tensor<double>({2}, {-INFINITY, 0}), 0), dpx::DomainError);
}

TEST_CASE("self subtraction is zero") {
  dpx::Rng rng(4);
  const auto a = rng.normal_tensor<double>({3, 4}, 1.0);
  CHECK(dpx::sub(a, a) == Tensor<double>::zeros({3, 4}));
  CHECK_THROWS_AS(dpx::add(a, Tensor<double>({4, 3})), dpx::DimensionError);
}

TEST_CASE("concat then slice recovers both operands") {
  dpx::Rng rng(5);
  const auto a = rng.normal_tensor<double>({2, 3}, 1.0);
  const auto b = rng.normal_tensor<double>({2, 5}, 1.0);
  const auto c = dpx::concat(a, b, 1);
  CHECK(c.shape() == dpx::Shape{2, 8});
  CHECK(dpx::slice(c, 1, 0, 3) == a);
  CHECK(dpx::slice(c, 1, 3, 8) == b);
}

TEST_CASE("elementwise mul equals a scalar loop exactly") {
  dpx::Rng rng(6);
  const auto a = rng.normal_tensor<double>({37}, 1.0);
  const auto b = rng.normal_tensor<double>({37}, 1.0);
  const auto c = dpx::mul(a, b);
  for (std::size_t i = 0; i < 37; ++i) CHECK(c[i] == a[i] * b[i]);
}

TEST_CASE("equal seeds give bit-identical draws") {
  dpx::Rng a(99), b(99);
  CHECK(a.normal_tensor<double>({64}, 1.0) == b.normal_tensor<double>({64}, 1.0));
  CHECK(dpx::Rng(1).split(7).next_u64() == dpx::Rng(1).split(7).next_u64());
  CHECK(dpx::Rng(1).split(7).next_u64() != dpx::Rng(1).split(8).next_u64());
}

TEST_CASE("every compiled kernel matches the scalar table bitwise") {
  dpx::Rng rng(8);
  const auto a = rng.normal_tensor<double>({9, 13}, 1.0);
  const auto b = rng.normal_tensor<double>({13, 11}, 1.0);
  const auto& ref = dpx::simd::kernels_for<double>(dpx::simd::Isa::kScalar);
  Tensor<double> want({9, 11});
  ref.matmul(a.data().data(), b.data().data(), want.data().data(), 9, 13, 11);
  for (auto isa : dpx::simd::available_isas()) {
    Tensor<double> got({9, 11});
    dpx::simd::kernels_for<double>(isa).matmul(a.data().data(), b.data().data(), got.data().data(), 9, 13, 11);
    CHECK_MESSAGE(got == want, dpx::simd::isa_name(isa));
  }
}

TEST_CASE("DPTF round trip preserves shape and bits") {
  dpx::Rng rng(10);
  const auto t = rng.normal_tensor<double>({2, 3, 4}, 1.0);
  CHECK(dpx::io::decode<double>(dpx::io::encode(t)) == t);
  const Tensor<std::int32_t> labels({2, 2}, {0, 3, -1, 7});
  const auto path = std::filesystem::temp_directory_path() / "dpx_unit_labels.dptf";
  dpx::io::write_file(path, labels);
  CHECK(dpx::io::read_file<std::int32_t>(path) == labels);
  std::filesystem::remove(path);
}

TEST_CASE("matmul reports 2mkn FLOPs") {
  const Tensor<double> a({3, 4}), b({4, 5});
  dpx::flops::Scope scope;
  dpx::matmul(a, b);
  CHECK(scope.count() == 2 * 3 * 4 * 5);
}

}  // TEST_SUITE
