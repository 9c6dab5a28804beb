// nlscore/error.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace nlscore {

/// Base of every error raised by the library. `kind()` is the class name
/// printed as the prefix of CLI diagnostics, e.g. "TrainError: ...".
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string &what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string &kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define NLSCORE_DEFINE_ERROR(Name)                                    \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string &what) : Error(#Name, what) {}    \
  };

NLSCORE_DEFINE_ERROR(EstimationError)
NLSCORE_DEFINE_ERROR(ModelError)
NLSCORE_DEFINE_ERROR(TrainError)
NLSCORE_DEFINE_ERROR(ConfigError)
NLSCORE_DEFINE_ERROR(EvalError)
NLSCORE_DEFINE_ERROR(ParseError)

#undef NLSCORE_DEFINE_ERROR

}  // namespace nlscore
