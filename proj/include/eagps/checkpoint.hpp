#pragma once

#include <filesystem>
#include <iosfwd>

#include "eagps/config.hpp"
#include "eagps/model.hpp"
#include "eagps/numerics.hpp"

namespace eagps {

struct Checkpoint {
    HyperConfig config;  // max_len resolved
    ModelShape shape;
    std::size_t epochs_done = 0;
    ParamStore params;   // values, Adam moments and step
};

// Magic "EAGPS1", a length-prefixed config text record, then one record per
// tensor: u64 name length, name, u64 rows, u64 cols, rows*cols little-endian
// doubles. Adam moments are stored as "opt.m.<name>" / "opt.v.<name>" and the
// step count as the 1x1 tensor "opt.step".
void write_checkpoint(const Model& model, std::ostream& out);
void save_checkpoint(const Model& model, const std::filesystem::path& path);

// Throws ParseError on a malformed stream and ConfigError when a tensor does
// not match the stored config.
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds a model over `graph`; throws DimensionError if the graph's sizes
// differ from the checkpoint's.
Model restore_model(Checkpoint ckpt, SequentialGraph graph);

}  // namespace eagps
