// Copyright 2026 The MOIT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MOIT_TOOLS_CLI_H_
#define MOIT_TOOLS_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace moit::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitIo = 3,
  kExitParse = 4,
  kExitCheckpoint = 5,
};

// Runs one subcommand. `args` starts at the subcommand name, e.g.
// {"train", "--data", "d.csv", "--out", "run"}.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

// "dir/d.csv" -> "dir/d.test.csv"; "d" -> "d.test".
std::string CompanionTestPath(const std::string& path);

}  // namespace moit::cli

#endif  // MOIT_TOOLS_CLI_H_
