#include "rulelearn/errors.hpp"

namespace rulelearn {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::UnknownPredicate: return "UnknownPredicate";
    case Errc::UnknownEntity: return "UnknownEntity";
    case Errc::ArityMismatch: return "ArityMismatch";
    case Errc::EmptyKB: return "EmptyKB";
    case Errc::InvalidSize: return "InvalidSize";
    case Errc::NoNegatives: return "NoNegatives";
    case Errc::NotEnoughNegatives: return "NotEnoughNegatives";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::HeadDivisibility: return "HeadDivisibility";
    case Errc::NonScalarLoss: return "NonScalarLoss";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::Divergence: return "Divergence";
    case Errc::NoTargets: return "NoTargets";
    case Errc::DigestMismatch: return "DigestMismatch";
    case Errc::IoFailure: return "IoFailure";
    case Errc::NotHardened: return "NotHardened";
    case Errc::KbTooLarge: return "KbTooLarge";
    case Errc::NoRules: return "NoRules";
    case Errc::ParseError: return "ParseError";
    case Errc::EncodeError: return "EncodeError";
    case Errc::FlagConflict: return "FlagConflict";
  }
  return "Unknown";
}

}  // namespace rulelearn
