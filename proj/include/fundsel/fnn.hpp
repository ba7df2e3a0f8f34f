#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fundsel/train_config.hpp"

namespace fundsel::fnn {

using fundsel::Optimizer;
using fundsel::TrainConfig;

/// Affine map between relative returns and the sigmoid's (0, 1) range.
struct TargetScaler {
    double lo = 0.0;
    double hi = 1.0;

    double scale(double target) const { return (target - lo) / (hi - lo); }
    double unscale(double unit) const { return lo + (hi - lo) * unit; }

    friend bool operator==(const TargetScaler&, const TargetScaler&) = default;
};

/// lo = min - margin * range, hi = max + margin * range.
TargetScaler fit_target_scaler(const Eigen::VectorXd& targets, double margin = 0.1);

/// Single-hidden-layer regressor: sigmoid(w2 . relu(W1 x + b1) + b2).
struct FnnModel {
    Eigen::MatrixXd w1; // hidden x input
    Eigen::VectorXd b1;
    Eigen::VectorXd w2; // one weight per hidden unit
    double b2 = 0.0;
    std::optional<TargetScaler> scaler;
    std::uint64_t seed = 0;
    TrainConfig hyper;
    double initial_loss = 0.0;
    double final_loss = 0.0;

    std::size_t n_in() const { return static_cast<std::size_t>(w1.cols()); }
    std::size_t n_hidden() const { return static_cast<std::size_t>(w1.rows()); }
    std::size_t parameter_count() const { return n_hidden() * n_in() + 2 * n_hidden() + 1; }

    /// Parameters in the order W1 (row-major), b1, w2, b2.
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& theta);
};

/// Glorot-uniform weights, zero biases. Deterministic in `seed`.
FnnModel init_fnn(std::size_t n_in, std::size_t n_hidden, std::uint64_t seed);

/// Network output, strictly inside (0, 1).
double forward(const FnnModel& model, const Eigen::VectorXd& x);

/// Forward pass over a batch (one sample per row).
Eigen::VectorXd forward_batch(const FnnModel& model, const Eigen::MatrixXd& x);

/// Mean squared error against targets already mapped to (0, 1).
double mse_loss(const FnnModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& unit_targets);

struct Gradient {
    Eigen::VectorXd theta; // same layout as FnnModel::parameters()
    double loss = 0.0;
};

/// Backpropagated MSE gradient with respect to every parameter.
Gradient mse_gradient(const FnnModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& unit_targets);

/// Fits the target scaler on `targets`, then runs the optimizer for
/// cfg.epochs passes over seeded mini-batch shuffles. Throws NonFiniteLoss
/// on divergence.
FnnModel train_fnn(FnnModel model, const Eigen::MatrixXd& x, const Eigen::VectorXd& targets,
                   const TrainConfig& cfg, double scaler_margin = 0.1);

/// Prediction in relative-return units. Throws ScalerUnset before training.
double predict_return(const FnnModel& model, const Eigen::VectorXd& x);

/// Max relative error between `analytic` and central differences of the
/// MSE with step h. The scaler must be set (targets are raw returns).
double compare_with_finite_differences(const FnnModel& model, const Eigen::MatrixXd& x,
                                       const Eigen::VectorXd& targets, double h,
                                       const Eigen::VectorXd& analytic);

/// Checks mse_gradient against central differences. Fits a scaler from
/// `targets` first if the model has none.
double gradient_check(const FnnModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& targets,
                      double h = 1e-5);

std::string serialize(const FnnModel& model);
FnnModel deserialize(const std::string& text);

} // namespace fundsel::fnn
