#ifndef NORMALNORM_CHECKPOINT_HPP
#define NORMALNORM_CHECKPOINT_HPP

#include <string>

#include "normalnorm/mlp.hpp"

namespace normalnorm {

// Checkpoint directory layout:
//   <dir>/manifest.json  - model spec, hyperparameters, tensor directory
//   <dir>/weights.bin    - raw little-endian float32 blobs, named and
//                          located by the manifest's offset/count entries
// Tensors stored: every learnable parameter plus each norm layer's running
// mu/sigma2/lambda.
void save_checkpoint(const Mlp& model, const std::string& dir);
Mlp load_checkpoint(const std::string& dir);

} // namespace normalnorm

#endif
