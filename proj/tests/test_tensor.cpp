#include <gtest/gtest.h>

#include "deepcast/parameters.hpp"
#include "deepcast/prng.hpp"
#include "deepcast/tensor.hpp"
#include "test_util.hpp"

using namespace deepcast;

TEST(Tensor, ShapeMatchesData) {
    Tensor t({2, 3});
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.rank(), 2u);
    EXPECT_THROW(Tensor({2, 0}), ShapeError);
    EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST(Tensor, RowMajorAccess) {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t(0, 2), 3.0);
    EXPECT_EQ(t(1, 0), 4.0);
    Tensor u({2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
    EXPECT_EQ(u(1, 0, 1), 5.0);
    EXPECT_EQ(u(0, 1, 0), 2.0);
}

TEST(Tensor, FiniteCheckAndEquality) {
    Tensor a({2}, {1.0, 2.0});
    Tensor b({2}, {1.0, 2.0});
    EXPECT_TRUE(a == b);
    EXPECT_TRUE(a.all_finite());
    b[1] = std::numeric_limits<double>::infinity();
    EXPECT_FALSE(b.all_finite());
    EXPECT_FALSE(a == b);
}

TEST(Prng, IdenticalSeedsIdenticalStreams) {
    Prng a(1234567), b(1234567);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    Prng c(1234568);
    EXPECT_NE(Prng(1234567).next_u64(), c.next_u64());
}

TEST(Prng, UniformRange) {
    Prng rng(99);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.uniform01();
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.uniform(-2.5, 7.5);
        EXPECT_GE(v, -2.5);
        EXPECT_LT(v, 7.5);
    }
}

TEST(Prng, SubSeedStreams) {
    EXPECT_EQ(sub_seed(42, 0), Prng(42).next_u64());
    EXPECT_NE(sub_seed(42, 0), sub_seed(42, 1));
    EXPECT_NE(sub_seed(42, 1), sub_seed(42, 2));
}

TEST(ParameterSet, AddFindOrder) {
    ParameterSet p;
    p.add("a", Tensor({2}));
    p.add("b", Tensor({3}));
    EXPECT_EQ(p.count(), 2u);
    EXPECT_EQ(p.scalar_count(), 5u);
    EXPECT_EQ(p.name(0), "a");
    EXPECT_NE(p.find("b"), nullptr);
    EXPECT_EQ(p.find("c"), nullptr);
    EXPECT_THROW(p.add("a", Tensor({1})), Error);
    EXPECT_THROW(p.get("zzz"), Error);
}

TEST(ParameterSet, ZerosLikeAndAccumulate) {
    ParameterSet p;
    p.add("w", Tensor({2}, {1.0, -2.0}));
    ParameterSet z = p.zeros_like();
    EXPECT_TRUE(p.same_layout(z));
    EXPECT_EQ(z.tensor(0)[0], 0.0);
    z.accumulate(p);
    z.accumulate(p);
    z.scale(0.5);
    EXPECT_DOUBLE_EQ(z.tensor(0)[0], 1.0);
    EXPECT_DOUBLE_EQ(z.tensor(0)[1], -2.0);
}

TEST(FiniteDifference, QuadraticDerivative) {
    ParameterSet p;
    p.add("x", Tensor({1}, {3.0}));
    auto f = [](const ParameterSet& q) { return q.tensor(0)[0] * q.tensor(0)[0]; };
    ParameterSet g = finite_difference_gradient(f, p, 1e-5);
    EXPECT_NEAR(g.tensor(0)[0], 6.0, 1e-8);
}

TEST(FiniteDifference, ConstantIsZeroLinearIsOnes) {
    ParameterSet p;
    p.add("x", Tensor({4}, {1.0, -1.0, 0.5, 2.0}));
    ParameterSet g = finite_difference_gradient([](const ParameterSet&) { return 7.5; }, p, 1e-5);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(g.tensor(0)[k], 0.0);
    ParameterSet ones = finite_difference_gradient(
        [](const ParameterSet& q) {
            double s = 0.0;
            for (std::size_t k = 0; k < q.tensor(0).size(); ++k) s += q.tensor(0)[k];
            return s;
        },
        p, 1e-5);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(ones.tensor(0)[k], 1.0, 1e-9);
}

TEST(FiniteDifference, RejectsBadStepAndNonFinite) {
    ParameterSet p;
    p.add("x", Tensor({1}, {1.0}));
    auto f = [](const ParameterSet& q) { return q.tensor(0)[0]; };
    EXPECT_THROW(finite_difference_gradient(f, p, 0.0), OracleError);
    EXPECT_THROW(finite_difference_gradient(f, p, -1e-5), OracleError);
    auto blows_up = [](const ParameterSet&) { return std::numeric_limits<double>::infinity(); };
    EXPECT_THROW(finite_difference_gradient(blows_up, p, 1e-5), OracleError);
}
