// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmos/common.hpp"

#include <cstdio>

namespace dmos {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::InvalidCount: return "InvalidCount";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::TooShortInput: return "TooShortInput";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::TargetOutOfRange: return "TargetOutOfRange";
    case ErrorKind::AllFramesMasked: return "AllFramesMasked";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::WrongHeadMode: return "WrongHeadMode";
    case ErrorKind::MissingCodebooks: return "MissingCodebooks";
    case ErrorKind::MissingLayerCodebook: return "MissingLayerCodebook";
    case ErrorKind::StepOutOfRange: return "StepOutOfRange";
    case ErrorKind::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::RankDeficient: return "RankDeficient";
  }
  return "Unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile:
    case ErrorKind::MalformedRow:
    case ErrorKind::DuplicateId:
    case ErrorKind::InvalidCount:
    case ErrorKind::EmptyBatch:
    case ErrorKind::TooShortInput:
    case ErrorKind::InsufficientData:
    case ErrorKind::CorruptFile:
    case ErrorKind::TargetOutOfRange:
    case ErrorKind::AllFramesMasked:
    case ErrorKind::DegenerateInput:
      return 3;
    case ErrorKind::NonFiniteInput:
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::RankDeficient:
      return 4;
    default:
      return 2;
  }
}

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace dmos
