#pragma once

#include <cstddef>
#include <cstdint>

namespace fundsel {

enum class Optimizer { Adam, Sgd };

/// Optimizer settings shared by the FNN and the ANFIS premise training.
struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 500;
    std::size_t batch_size = 16;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    /// Plain gradient descent (Sgd) applies delta_w = -lr * dE/dw directly.
    Optimizer optimizer = Optimizer::Adam;

    void validate() const;
};

} // namespace fundsel
