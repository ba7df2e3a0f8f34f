#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fundsel/train_config.hpp"

namespace fundsel::anfis {

/// Subtractive clustering parameters, in unit-hypercube coordinates.
struct SubClustConfig {
    double radius = 0.5;       // r_a, cluster influence range
    double squash = 1.25;      // r_b = squash * r_a
    double accept_ratio = 0.5;
    double reject_ratio = 0.15;

    void validate() const;
};

struct ClusterResult {
    std::vector<std::size_t> indices; // selected rows, in selection order
    Eigen::MatrixXd centers;          // the selected rows themselves
};

/// Chiu's subtractive clustering. Every center is one of the input rows.
ClusterResult subtractive_cluster(const Eigen::MatrixXd& unit_points, const SubClustConfig& cfg = {});

struct Range {
    double min = 0.0;
    double max = 1.0;
    double width() const { return max - min; }
    friend bool operator==(const Range&, const Range&) = default;
};

/// One first-order TSK rule: a Gaussian per input and a linear consequent
/// p . x + r.
struct Rule {
    Eigen::VectorXd center;
    Eigen::VectorXd sigma;
    Eigen::VectorXd coeffs;
    double intercept = 0.0;
};

struct AnfisModel {
    std::vector<Rule> rules;
    std::vector<Range> input_ranges;
    Range target_range;
    /// Training MSE after each consequent solve, oldest first.
    std::vector<double> loss_history;

    std::size_t n_in() const { return input_ranges.size(); }
    std::size_t n_rules() const { return rules.size(); }
    std::size_t consequent_count() const { return n_rules() * (n_in() + 1); }
};

/// Per-column (min, max).
std::vector<Range> column_ranges(const Eigen::MatrixXd& x);

/// One rule per center. `unit_centers` are joint (inputs..., target)
/// coordinates in [0, 1]; input coordinates are mapped back to raw units
/// through `x_ranges` and the target coordinate is ignored. Widths are
/// radius * range / sqrt(8), consequents start at zero.
AnfisModel build_anfis(const Eigen::MatrixXd& unit_centers, const std::vector<Range>& x_ranges, Range t_range,
                       double radius);

/// Scales inputs and target jointly to [0, 1] by their ranges, clusters, and
/// builds the initial rule base.
AnfisModel anfis_from_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, const SubClustConfig& cfg = {});

/// Below this total firing strength the nearest rule takes all the weight.
inline constexpr double kUnderflow = 1e-300;

struct ForwardTrace {
    Eigen::MatrixXd membership;  // layer 1, rules x inputs
    Eigen::VectorXd firing;      // layer 2
    Eigen::VectorXd normalized;  // layer 3
    Eigen::VectorXd consequent;  // p_i . x + r_i
    Eigen::VectorXd weighted;    // layer 4
    bool underflow = false;
};

struct ForwardResult {
    double y = 0.0; // layer 5
    ForwardTrace trace;
};

ForwardResult anfis_forward(const AnfisModel& model, const Eigen::VectorXd& x);

/// Output of the network read directly as a relative-return fraction.
double anfis_predict(const AnfisModel& model, const Eigen::VectorXd& x);

double mse(const AnfisModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& t);

/// Ridge least-squares solve for every consequent coefficient with the
/// premises held fixed. Throws SingularSystem for a rank-deficient system
/// when ridge is 0.
AnfisModel fit_consequents_lse(AnfisModel model, const Eigen::MatrixXd& x, const Eigen::VectorXd& t, double ridge);

/// Premise parameters laid out rule by rule: centers, then widths.
Eigen::VectorXd premise_parameters(const AnfisModel& model);
void set_premise_parameters(AnfisModel& model, const Eigen::VectorXd& theta);

/// d MSE / d premise, same layout as premise_parameters.
Eigen::VectorXd premise_gradient(const AnfisModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& t);

/// Max relative error of premise_gradient against central differences.
double premise_gradient_check(const AnfisModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                              double h = 1e-5);

/// Hybrid learning: each epoch solves the consequents by least squares and
/// then takes one gradient step on the premises. A final solve leaves the
/// consequents consistent with the returned premises, so epochs = 0 is a
/// plain least-squares fit.
AnfisModel train_anfis(AnfisModel model, const Eigen::MatrixXd& x, const Eigen::VectorXd& t, const TrainConfig& cfg,
                       double ridge);

std::string serialize(const AnfisModel& model);
AnfisModel deserialize(const std::string& text);

} // namespace fundsel::anfis
