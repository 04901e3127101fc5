#ifndef DARM_DOT_HPP
#define DARM_DOT_HPP

#include <string>

#include "darm/ir.hpp"

namespace darm {

enum class DotLabelMode { BlocksOnly, FullInstructions };

// One digraph per function, one node per block, one edge per CFG edge.
// Nodes are emitted in function block order so output is deterministic.
std::string emitDot(const Function &f, DotLabelMode mode);

}  // namespace darm

#endif
