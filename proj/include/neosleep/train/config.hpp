#pragma once

#include <cstdint>
#include <string>

#include "neosleep/error.hpp"

namespace neosleep::train {

struct TrainConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  int batch_size = 64;
  int max_epochs = 500;
  int patience_standalone = 35;
  int patience_loso = 20;
  double lr_factor = 0.1;
  int lr_plateau = 20;
  double inner_val_fraction = 0.10;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(Errc::config, "train: " + what); };
    if (!(lr > 0)) fail("lr must be positive");
    if (!(beta1 >= 0 && beta1 < 1)) fail("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0 && beta2 < 1)) fail("beta2 must lie in [0, 1)");
    if (!(eps > 0)) fail("eps must be positive");
    if (batch_size < 1) fail("batch_size must be at least 1");
    if (max_epochs < 1) fail("max_epochs must be at least 1");
    if (patience_standalone < 1 || patience_loso < 1) fail("patience must be at least 1");
    if (!(lr_factor > 0 && lr_factor < 1)) fail("lr_factor must lie in (0, 1)");
    if (lr_plateau < 1) fail("lr_plateau must be at least 1");
    if (!(inner_val_fraction > 0 && inner_val_fraction < 1)) fail("inner_val_fraction must lie in (0, 1)");
  }
};

}  // namespace neosleep::train
