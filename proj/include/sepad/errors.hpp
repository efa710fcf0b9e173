// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace sepad {

/// Base class of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SEPAD_ERROR(Name)              \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  };

// I/O and parsing
SEPAD_ERROR(IoError)
SEPAD_ERROR(ParseError)

// dataset
SEPAD_ERROR(InvalidDomain)
SEPAD_ERROR(InvalidSplit)
SEPAD_ERROR(InvalidLabel)
SEPAD_ERROR(AnomalousInTrain)
SEPAD_ERROR(DuplicateId)
SEPAD_ERROR(SampleRateMismatch)
SEPAD_ERROR(EmptyAudio)
SEPAD_ERROR(ClipTooShort)

// dsp
SEPAD_ERROR(InvalidConfig)
SEPAD_ERROR(InvalidInput)
SEPAD_ERROR(ShapeMismatch)
SEPAD_ERROR(ColaViolation)
SEPAD_ERROR(SilentSignal)

// model / training
SEPAD_ERROR(ConfigMismatch)
SEPAD_ERROR(CorruptCheckpoint)
SEPAD_ERROR(CheckpointNotFound)
SEPAD_ERROR(Diverged)
SEPAD_ERROR(NoNontargetClasses)
SEPAD_ERROR(EmptyPool)

// metrics
SEPAD_ERROR(OneClassInput)
SEPAD_ERROR(UndefinedMetric)

#undef SEPAD_ERROR

}  // namespace sepad
