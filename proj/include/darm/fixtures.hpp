#ifndef DARM_FIXTURES_HPP
#define DARM_FIXTURES_HPP

#include <string>

#include "darm/interp.hpp"
#include "darm/ir.hpp"

#include "json.hpp"

namespace darm {

// Fixture schema:
// { "warpSize": 32, "seed": 7,
//   "args": [[..per lane..], [17]],
//   "global": {"out": [0, 0, ...]}, "shared": {"buf": [...]} }
WarpInput warpInputFromJson(const nlohmann::json &j);
nlohmann::json warpInputToJson(const WarpInput &in);
WarpInput loadWarpInput(const std::string &path);

nlohmann::json statsToJson(const WarpExecStats &s);
nlohmann::json resultToJson(const WarpResult &r);

// Deterministic fixture for a kernel: memories get uniform random words,
// parameters get values in [0, 2*warpSize); a parameter whose name starts
// with 'j' or 'k' gets a power of two <= warpSize so that pairing-style
// kernels stay race free.
WarpInput makeRandomInput(const Module &m, const Function &f, int warpSize,
                          uint64_t seed);

}  // namespace darm

#endif
