#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gridcouple::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kConfig = 2,
    kConvergence = 3,
    kDivergence = 4,
};

struct RunRequest {
    std::string command;  // simulate | equilibrium | stability | controllability | lyapunov | sweep
    std::string scenario_path;
    std::string out_dir;
    std::optional<std::size_t> steps;
    std::vector<double> gamma_list;
    std::optional<std::uint64_t> seed;
};

[[nodiscard]] const std::vector<std::string>& commands();

/// Runs one command, writes its CSVs and `run.log` (JSON lines) into out_dir and
/// returns the exit status. Never throws for scenario or numerical problems.
int run(const RunRequest& request, std::ostream& console);

}  // namespace gridcouple::cli
