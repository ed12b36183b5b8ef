#ifndef RULELEARN_ERRORS_HPP
#define RULELEARN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rulelearn {

enum class Errc {
  UnknownPredicate,
  UnknownEntity,
  ArityMismatch,
  EmptyKB,
  InvalidSize,
  NoNegatives,
  NotEnoughNegatives,
  IndexOutOfRange,
  ShapeMismatch,
  HeadDivisibility,
  NonScalarLoss,
  NonFiniteValue,
  EmptyBatch,
  EmptyInput,
  Divergence,
  NoTargets,
  DigestMismatch,
  IoFailure,
  NotHardened,
  KbTooLarge,
  NoRules,
  ParseError,
  EncodeError,
  FlagConflict,
};

const char* errc_name(Errc c);

// Single exception type carrying a machine-checkable code. Tests match on
// code(), the CLI prints what().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace rulelearn

#endif
