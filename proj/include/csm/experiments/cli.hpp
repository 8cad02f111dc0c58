#pragma once

#include <ostream>

namespace csm::exp {

/// Entry point of the csm-lab tool. Returns 0 on success, 2 on usage errors
/// (bad flags, unknown subcommand, bad config), 1 on runtime failures.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace csm::exp
