// Copyright 2026 The newsrec Authors.
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

#include "newsrec/error.hpp"

namespace newsrec {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::MalformedLabel: return "MalformedLabel";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::NoNegativesAvailable: return "NoNegativesAvailable";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::IdOutOfRange: return "IdOutOfRange";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::MissingEmbedding: return "MissingEmbedding";
    case ErrorKind::PromptMismatch: return "PromptMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::AllMasked: return "AllMasked";
    case ErrorKind::NotScalarLoss: return "NotScalarLoss";
    case ErrorKind::BadFreezeDepth: return "BadFreezeDepth";
    case ErrorKind::NonFiniteScore: return "NonFiniteScore";
    case ErrorKind::NoTrainingData: return "NoTrainingData";
    case ErrorKind::DegenerateImpression: return "DegenerateImpression";
    case ErrorKind::NoPositive: return "NoPositive";
    case ErrorKind::MissingScores: return "MissingScores";
    case ErrorKind::BaselineMissing: return "BaselineMissing";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::DataMissing: return "DataMissing";
    case ErrorKind::EmptyCell: return "EmptyCell";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

bool Error::is_data_error() const noexcept {
  switch (kind_) {
    case ErrorKind::InvalidSpec:
    case ErrorKind::BadFreezeDepth:
    case ErrorKind::EmptyCell:
    case ErrorKind::BaselineMissing:
      return false;
    default:
      return true;
  }
}

}  // namespace newsrec
