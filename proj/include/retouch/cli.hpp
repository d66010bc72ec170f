#pragma once

#include <iosfwd>

namespace retouch {

// Entry point of the retouch command line: run, apply, eval, pairs, serve.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace retouch
