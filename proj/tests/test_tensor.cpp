#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "embedkit/tensor.hpp"
#include "test_util.hpp"

using embedkit::Tensor;

TEST_CASE("shape and data must agree") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({0, 2}, {}), std::invalid_argument);
    const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.at(1, 2) == 6.0);
}

TEST_CASE("constructors") {
    CHECK(Tensor::zeros(2, 2).numel() == 4);
    CHECK(Tensor::full(2, 2, 3.0).at(1, 1) == 3.0);
    CHECK(Tensor::identity(3).at(2, 2) == 1.0);
    CHECK(Tensor::identity(3).at(0, 2) == 0.0);
    CHECK(Tensor::scalar(5.0).numel() == 1);
    CHECK(Tensor::row({1, 2, 3}).cols() == 3);
    CHECK(Tensor::column({1, 2, 3}).rows() == 3);
}

TEST_CASE("finite detection") {
    Tensor t = Tensor::zeros(1, 2);
    CHECK(t.finite());
    t.data[1] = std::numeric_limits<double>::infinity();
    CHECK(!t.finite());
}

TEST_CASE("matrix kernels against naive loops") {
    std::mt19937_64 rng(11);
    const Tensor a = testutil::random_tensor(3, 4, rng);
    const Tensor b = testutil::random_tensor(4, 2, rng);

    Tensor c = Tensor::zeros(3, 2);
    embedkit::mm_nn(a.data.data(), b.data.data(), c.data.data(), 3, 4, 2);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
            double want = 0.0;
            for (int t = 0; t < 4; ++t) want += a.at(i, t) * b.at(t, j);
            CHECK(c.at(i, j) == doctest::Approx(want).epsilon(1e-15));
        }
    }

    const Tensor bt = testutil::random_tensor(2, 4, rng);
    Tensor cnt = Tensor::zeros(3, 2);
    embedkit::mm_nt(a.data.data(), bt.data.data(), cnt.data.data(), 3, 4, 2);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
            double want = 0.0;
            for (int t = 0; t < 4; ++t) want += a.at(i, t) * bt.at(j, t);
            CHECK(cnt.at(i, j) == doctest::Approx(want).epsilon(1e-15));
        }
    }

    const Tensor at = testutil::random_tensor(4, 3, rng);
    Tensor ctn = Tensor::zeros(3, 2);
    embedkit::mm_tn(at.data.data(), b.data.data(), ctn.data.data(), 3, 4, 2);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
            double want = 0.0;
            for (int t = 0; t < 4; ++t) want += at.at(t, i) * b.at(t, j);
            CHECK(ctn.at(i, j) == doctest::Approx(want).epsilon(1e-15));
        }
    }
}
