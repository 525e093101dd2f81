#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace epdic {

/// Runs one subcommand (simulate, fit, tune, select, influence, panel, nn).
/// `args` excludes the program name. Returns 0 on success, 1 on usage or
/// input errors, 2 on numerical failures.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace epdic
