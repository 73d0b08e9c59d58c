#pragma once

#include <string>
#include <vector>

#include "issnode/data.hpp"
#include "issnode/model.hpp"

namespace issnode {

// Emits the learned CTRNN as a Verilog-A behavioral module. The realized
// (stability-scaled) A is baked in as plain constants; port normalization and
// the time rescaling are inlined so the module operates on physical units.
// Output is byte-identical across runs for fixed inputs.
std::string emit_veriloga(const CtrnnParams& params, const std::string& module_name,
                          const std::vector<NormRecord>& u_norm,
                          const std::vector<NormRecord>& y_norm,
                          double time_scale = 1.0);

// Parses the baked `A_<i>_<j>` parameter constants back out of emitted text;
// used to check round-trip fidelity against effective_A.
Matrix parse_baked_A(const std::string& text, std::size_t l, std::size_t n);

}  // namespace issnode
