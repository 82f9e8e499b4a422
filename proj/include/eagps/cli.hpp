#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "eagps/config.hpp"
#include "eagps/data.hpp"
#include "eagps/numerics.hpp"

namespace eagps::cli {

enum ExitCode : int { ok = 0, check_failed = 1, io_failure = 2 };

// Runs one subcommand; never throws. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path path_;
};

// 20 items, 5 users, d=8, alpha=4, beta=2, eta=2, gamma=0.4.
HyperConfig gradcheck_config();
SequenceSet gradcheck_data(std::uint64_t seed = 11);

struct GradcheckRun {
    GradCheckReport report;
    double seconds = 0.0;
};

// Finite-difference check of the full training objective with dropout and
// masks frozen. A non-empty `corrupt` adds 1e-3 to the first gradient entry
// of that tensor (used to prove the check can fail).
GradcheckRun run_gradcheck(const HyperConfig& cfg, const SequenceSet& data, const GradCheckOptions& opt = {},
                           const std::string& corrupt = {});

}  // namespace eagps::cli
