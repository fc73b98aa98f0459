#pragma once

// Command-line front end. Exit codes: 0 success or no alarm, 1 usage or
// runtime error, 2 derivative alarm, 3 deviation-only alarm.

#include <ostream>
#include <string>
#include <vector>

namespace ddetect::cli {

enum ExitCode : int { kOk = 0, kError = 1, kDerivativeAlarm = 2, kDeviationAlarm = 3 };

/// args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ddetect::cli
