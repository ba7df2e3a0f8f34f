#include "fundsel/train_config.hpp"

#include "fundsel/error.hpp"

namespace fundsel {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0))
        fail(ErrorKind::InvalidArgument, "learning_rate must be positive");
    if (batch_size == 0)
        fail(ErrorKind::InvalidArgument, "batch_size must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        fail(ErrorKind::InvalidArgument, "Adam betas must lie in (0, 1)");
    if (!(eps > 0.0))
        fail(ErrorKind::InvalidArgument, "Adam eps must be positive");
}

} // namespace fundsel
