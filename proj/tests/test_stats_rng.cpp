#include <catch2/catch_amalgamated.hpp>

#include "ntumatch/rng.hpp"
#include "ntumatch/stats.hpp"

using namespace ntumatch;

TEST_CASE("normal quantile inverts the cdf") {
    for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-6}) {
        REQUIRE(normal_cdf(normal_quantile(p)) == Catch::Approx(p).epsilon(1e-9));
    }
    REQUIRE(normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-15));
    REQUIRE_THROWS_AS(normal_quantile(-0.1), InvalidInput);
}

TEST_CASE("normal cdf basics") {
    REQUIRE(normal_cdf(0.0) == Catch::Approx(0.5));
    REQUIRE(normal_ccdf(5.0) == Catch::Approx(2.8665157187919333e-7).epsilon(1e-10));
    REQUIRE(normal_pdf(0.0) == Catch::Approx(0.3989422804014327));
}

TEST_CASE("rng streams are deterministic and tag-separated") {
    auto a = RngStream::from_master(123).substream("x");
    auto b = RngStream::from_master(123).substream("x");
    auto c = RngStream::from_master(123).substream("y");
    REQUIRE(a.next_u64() == b.next_u64());
    REQUIRE(a.next_u64() == b.next_u64());
    auto a2 = RngStream::from_master(123).substream("x");
    REQUIRE(a2.next_u64() != c.next_u64());
}

TEST_CASE("rng normal draws match the standard normal moments") {
    auto rng = RngStream::from_master(7);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    REQUIRE(std::fabs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    REQUIRE(var == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("summary helpers") {
    std::vector<double> xs{3.0, 1.0, 2.0, 4.0};
    REQUIRE(mean(xs) == Catch::Approx(2.5));
    REQUIRE(median(xs) == Catch::Approx(2.5));
    REQUIRE(variance(xs) == Catch::Approx(5.0 / 3.0));
    REQUIRE(quantile(xs, 0.0) == 1.0);
    REQUIRE(quantile(xs, 1.0) == 4.0);
}
