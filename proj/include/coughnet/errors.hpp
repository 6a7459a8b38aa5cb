/* Copyright 2026 The Coughnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef COUGHNET_ERRORS_HPP_
#define COUGHNET_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace coughnet {

// All pipeline failures derive from Error, so callers that only care about
// "this file/stage failed" can catch one type.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define COUGHNET_DEFINE_ERROR(Name)                              \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& what) : Error(what) {}      \
  }

COUGHNET_DEFINE_ERROR(MalformedContainer);
COUGHNET_DEFINE_ERROR(UnsupportedEncoding);
COUGHNET_DEFINE_ERROR(EmptyAudio);
COUGHNET_DEFINE_ERROR(LengthMismatch);
COUGHNET_DEFINE_ERROR(RateOutOfRange);
COUGHNET_DEFINE_ERROR(SemitonesOutOfRange);
COUGHNET_DEFINE_ERROR(OneClassOnly);
COUGHNET_DEFINE_ERROR(ShapeMismatch);
COUGHNET_DEFINE_ERROR(InferBeforeTrain);
COUGHNET_DEFINE_ERROR(StaleCache);
COUGHNET_DEFINE_ERROR(LabelOutOfDomain);
COUGHNET_DEFINE_ERROR(ClassTooSmall);
COUGHNET_DEFINE_ERROR(ChecksumMismatch);
COUGHNET_DEFINE_ERROR(DomainError);
COUGHNET_DEFINE_ERROR(ConfigError);
COUGHNET_DEFINE_ERROR(IoError);

#undef COUGHNET_DEFINE_ERROR

}  // namespace coughnet

#endif  // COUGHNET_ERRORS_HPP_
