#include <doctest.h>

#include <cstring>

#include "mva/ops.hpp"
#include "mva/tensor.hpp"

using namespace mva;

TEST_SUITE("tensor") {

TEST_CASE("shape and buffer sizes agree") {
  Tensor t = Tensor::zeros({3, 4});
  CHECK(t.size() == 12);
  CHECK(t.data->size() == 12);
  Tensor s = Tensor::scalar(2.5);
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s.item() == 2.5);
}

TEST_CASE("from rejects mismatched value counts") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::zeros({2, -1}), std::invalid_argument);
}

TEST_CASE("copies share the buffer, clone does not") {
  Tensor a = Tensor::from({2}, {1.0, 2.0});
  Tensor b = a;
  (*b.data)[0] = 9.0;
  CHECK(a.ptr()[0] == 9.0);
  Tensor c = a.clone();
  (*c.data)[0] = -1.0;
  CHECK(a.ptr()[0] == 9.0);
  CHECK(a.same_buffer(b));
  CHECK(!a.same_buffer(c));
}

TEST_CASE("two forward passes on identical inputs are bitwise identical") {
  Tensor x = Tensor::from({3, 3}, {0.1, -0.4, 2.0, 1.5, 0.0, -2.5, 0.7, 0.3, 1.1});
  Tensor w = Tensor::from({3, 3}, {1.0, 0.5, -0.25, 0.125, 2.0, -1.0, 0.75, 0.3, 0.9});
  Tensor y1 = softmax(matmul(gelu(x), w));
  Tensor y2 = softmax(matmul(gelu(x), w));
  CHECK(std::memcmp(y1.ptr(), y2.ptr(), sizeof(double) * static_cast<std::size_t>(y1.size())) == 0);
}

TEST_CASE("item rejects non-scalars") {
  CHECK_THROWS_AS(Tensor::zeros({2}).item(), std::invalid_argument);
}

}  // TEST_SUITE
