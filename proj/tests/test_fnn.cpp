#include <cmath>

#include <gtest/gtest.h>

#include "fundsel/fnn.hpp"
#include "fundsel/rng.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using fundsel::ErrorKind;
using namespace fundsel::fnn;
using testing_util::kind_of;

namespace {

Eigen::MatrixXd uniform_matrix(fundsel::Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                               double hi = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = rng.uniform(lo, hi);
    return m;
}

Eigen::VectorXd central_differences(const FnnModel& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& unit,
                                    double h) {
    auto loss = [&](const Eigen::VectorXd& theta) { return oracle::fnn_loss(theta, m.n_in(), m.n_hidden(), x, unit); };
    return oracle::central_differences(loss, m.parameters(), h);
}

struct LinearFixture {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
};

LinearFixture linear_fixture() {
    fundsel::Rng rng(31);
    LinearFixture f{uniform_matrix(rng, 200, 3), Eigen::VectorXd(200)};
    for (Eigen::Index i = 0; i < 200; ++i)
        f.y(i) = 0.2 * f.x(i, 0) - 0.1 * f.x(i, 1) + 0.05 * f.x(i, 2);
    return f;
}

} // namespace

TEST(FnnInit, ShapesAndGlorotBounds) {
    const auto m = init_fnn(21, 21, 4);
    EXPECT_EQ(m.parameter_count(), 484u);
    EXPECT_EQ(m.parameters().size(), 484);
    const double bound1 = std::sqrt(6.0 / 42.0), bound2 = std::sqrt(6.0 / 22.0);
    EXPECT_LE(m.w1.cwiseAbs().maxCoeff(), bound1);
    EXPECT_LE(m.w2.cwiseAbs().maxCoeff(), bound2);
    EXPECT_TRUE(m.b1.isZero(0.0));
    EXPECT_EQ(m.b2, 0.0);
    EXPECT_EQ(init_fnn(21, 21, 4).parameters(), m.parameters());
    EXPECT_NE(init_fnn(21, 21, 5).parameters(), m.parameters());
    EXPECT_EQ(kind_of([] { init_fnn(0, 3, 1); }), ErrorKind::InvalidArgument);
}

TEST(FnnForward, Examples) {
    auto zero = init_fnn(5, 4, 1);
    zero.set_parameters(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(zero.parameter_count())));
    fundsel::Rng rng(3);
    for (int i = 0; i < 20; ++i)
        EXPECT_EQ(forward(zero, uniform_matrix(rng, 5, 1, -10, 10)), 0.5);

    auto tiny = init_fnn(1, 1, 1);
    tiny.set_parameters(Eigen::Vector4d(1.0, 0.0, 1.0, 0.0));
    EXPECT_EQ(forward(tiny, Eigen::VectorXd::Constant(1, -5.0)), 0.5);
    EXPECT_NEAR(forward(tiny, Eigen::VectorXd::Constant(1, 2.0)), 0.8807970779778823, 1e-15);
    EXPECT_EQ(kind_of([&] { forward(tiny, Eigen::VectorXd::Zero(2)); }), ErrorKind::DimensionMismatch);
}

TEST(TargetScaler, Examples) {
    const auto s = fit_target_scaler(Eigen::Vector2d(-0.1, 0.3), 0.1);
    EXPECT_NEAR(s.lo, -0.14, 1e-15);
    EXPECT_NEAR(s.hi, 0.34, 1e-15);
    EXPECT_EQ(kind_of([] { fit_target_scaler(Eigen::VectorXd::Constant(5, 0.05)); }), ErrorKind::DegenerateTargets);

    fundsel::Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
        const double t = rng.uniform(-0.5, 0.5);
        EXPECT_NEAR(s.unscale(s.scale(t)), t, 1e-15 * std::max(1.0, std::abs(t)));
    }
}

TEST(TargetScaler, PredictionUsesAffineMap) {
    auto m = init_fnn(2, 3, 1);
    m.set_parameters(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.parameter_count())));
    EXPECT_EQ(kind_of([&] { predict_return(m, Eigen::Vector2d(1, 1)); }), ErrorKind::ScalerUnset);
    m.scaler = TargetScaler{-0.14, 0.34};
    EXPECT_NEAR(predict_return(m, Eigen::Vector2d(1, 1)), 0.10, 1e-15);
    // A large negative output bias drives the sigmoid toward 0, the prediction toward lo.
    auto theta = m.parameters();
    theta(theta.size() - 1) = -20.0;
    m.set_parameters(theta);
    const double p = predict_return(m, Eigen::Vector2d(1, 1));
    EXPECT_GT(p, -0.14);
    EXPECT_LT(p, -0.14 + 1e-8);
}

TEST(FnnGradient, MatchesIndependentCentralDifferences) {
    fundsel::Rng rng(12);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        FnnModel m = init_fnn(21, 21, 500 + static_cast<std::uint64_t>(trial));
        const Eigen::MatrixXd x = uniform_matrix(rng, 4, 21);
        const Eigen::VectorXd t = uniform_matrix(rng, 4, 1, -0.1, 0.1);
        m.scaler = fit_target_scaler(t);
        Eigen::VectorXd unit(4);
        for (Eigen::Index i = 0; i < 4; ++i)
            unit(i) = m.scaler->scale(t(i));
        const auto g = mse_gradient(m, x, unit);
        EXPECT_NEAR(g.loss, oracle::fnn_loss(m.parameters(), 21, 21, x, unit), 1e-14);
        worst = std::max(worst, oracle::max_relative_error(g.theta, central_differences(m, x, unit, 1e-5)));
        EXPECT_LT(gradient_check(m, x, t), 1e-4);
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(FnnGradient, ErrorShrinksWithStep) {
    fundsel::Rng rng(13);
    FnnModel m = init_fnn(6, 5, 77);
    m.set_parameters(m.parameters() + uniform_matrix(rng, static_cast<Eigen::Index>(m.parameter_count()), 1, -0.3, 0.3));
    const Eigen::MatrixXd x = uniform_matrix(rng, 4, 6);
    const Eigen::VectorXd unit = uniform_matrix(rng, 4, 1, 0.2, 0.8);
    const Eigen::VectorXd g = mse_gradient(m, x, unit).theta;
    const double coarse = (central_differences(m, x, unit, 1e-2) - g).cwiseAbs().maxCoeff();
    const double fine = (central_differences(m, x, unit, 1e-4) - g).cwiseAbs().maxCoeff();
    EXPECT_LT(fine, coarse);
}

TEST(FnnGradient, VanishesNearAFittedMinimum) {
    // Targets produced by the model itself: the loss is 0 and so is its gradient.
    fundsel::Rng rng(14);
    FnnModel m = init_fnn(3, 4, 9);
    const Eigen::MatrixXd x = uniform_matrix(rng, 10, 3);
    const Eigen::VectorXd unit = forward_batch(m, x);
    const auto g = mse_gradient(m, x, unit);
    EXPECT_LT(g.theta.norm(), 1e-8);
    EXPECT_LT(central_differences(m, x, unit, 1e-5).norm(), 1e-8);
}

TEST(FnnTraining, LearnsNoiselessLinearFixture) {
    const auto f = linear_fixture();
    TrainConfig cfg;
    cfg.seed = 3;
    const auto model = train_fnn(init_fnn(3, 21, 3), f.x, f.y, cfg);
    double se = 0.0;
    for (Eigen::Index i = 0; i < f.x.rows(); ++i)
        se += std::pow(predict_return(model, f.x.row(i).transpose()) - f.y(i), 2);
    const double rmse = std::sqrt(se / static_cast<double>(f.x.rows()));
    EXPECT_LT(rmse, 0.01);
    EXPECT_LT(model.final_loss, model.initial_loss);
}

TEST(FnnTraining, ZeroEpochsOnlyFitsTheScaler) {
    const auto f = linear_fixture();
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto init = init_fnn(3, 21, 8);
    const auto model = train_fnn(init, f.x, f.y, cfg);
    EXPECT_EQ(model.parameters(), init.parameters());
    ASSERT_TRUE(model.scaler);
    EXPECT_EQ(*model.scaler, fit_target_scaler(f.y, 0.1));
}

TEST(FnnTraining, SameSeedIsBitIdentical) {
    const auto f = linear_fixture();
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.seed = 21;
    const auto a = train_fnn(init_fnn(3, 8, 1), f.x, f.y, cfg);
    const auto b = train_fnn(init_fnn(3, 8, 1), f.x, f.y, cfg);
    EXPECT_EQ(a.parameters(), b.parameters());
    cfg.seed = 22;
    const auto c = train_fnn(init_fnn(3, 8, 1), f.x, f.y, cfg);
    EXPECT_NE(a.parameters(), c.parameters());
}

TEST(FnnTraining, SgdAppliesPlainGradientStep) {
    // One full-batch SGD step equals theta - lr * grad.
    const auto f = linear_fixture();
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 200;
    cfg.optimizer = fundsel::Optimizer::Sgd;
    cfg.learning_rate = 0.05;
    auto init = init_fnn(3, 5, 2);
    const auto trained = train_fnn(init, f.x, f.y, cfg);
    init.scaler = trained.scaler;
    Eigen::VectorXd unit(f.y.size());
    for (Eigen::Index i = 0; i < f.y.size(); ++i)
        unit(i) = init.scaler->scale(f.y(i));
    const Eigen::VectorXd expect = init.parameters() - 0.05 * mse_gradient(init, f.x, unit).theta;
    EXPECT_LT((trained.parameters() - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(FnnSerialization, RoundTripIsBitExact) {
    const auto f = linear_fixture();
    TrainConfig cfg;
    cfg.epochs = 5;
    const auto m = train_fnn(init_fnn(3, 6, 4), f.x, f.y, cfg);
    const auto back = deserialize(serialize(m));
    EXPECT_EQ(back.parameters(), m.parameters());
    EXPECT_EQ(back.scaler, m.scaler);
    EXPECT_EQ(back.seed, m.seed);
    EXPECT_EQ(serialize(back), serialize(m));
    EXPECT_EQ(kind_of([] { deserialize("garbage"); }), ErrorKind::SchemaError);
}
