#ifndef UNETSURV_CLI_HPP
#define UNETSURV_CLI_HPP

namespace unetsurv::cli {

// Exit codes: 0 success, 1 validation/config error, 2 runtime failure.
int run(int argc, const char* const* argv);

}  // namespace unetsurv::cli

#endif
