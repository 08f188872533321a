#pragma once

#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <vector>

#include "ps/dataset.hpp"

namespace ps::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

// args[0] is the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, const char* const* argv);

// Loads an instance store, or the named split subdirectories of an
// `extract` output directory.
std::vector<dataset::Instance> load_instance_dir(const std::filesystem::path& dir,
                                                 std::initializer_list<const char*> splits);

}  // namespace ps::cli
