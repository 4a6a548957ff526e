#pragma once

#include <stdexcept>
#include <string>

namespace polyswarm {

// Base of every recoverable error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define POLYSWARM_DEFINE_ERROR(Name)      \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

POLYSWARM_DEFINE_ERROR(ValidationError);
POLYSWARM_DEFINE_ERROR(DegenerateOddsError);
POLYSWARM_DEFINE_ERROR(ConfigError);

// marketdata
POLYSWARM_DEFINE_ERROR(SourceUnavailable);

// swarm
POLYSWARM_DEFINE_ERROR(SampleError);
POLYSWARM_DEFINE_ERROR(PromptBuildError);
POLYSWARM_DEFINE_ERROR(SwarmEmptyError);
POLYSWARM_DEFINE_ERROR(TransportError);

// aggregation
POLYSWARM_DEFINE_ERROR(EmptySwarmError);

// analysis
POLYSWARM_DEFINE_ERROR(GroupError);

// latency_arb
POLYSWARM_DEFINE_ERROR(ExpiredError);
POLYSWARM_DEFINE_ERROR(DegenerateVolError);
POLYSWARM_DEFINE_ERROR(VolEstimateError);

// execution
POLYSWARM_DEFINE_ERROR(StaleMarketError);
POLYSWARM_DEFINE_ERROR(AmbiguousSubmitError);

// evaluation
POLYSWARM_DEFINE_ERROR(EmptyEvalError);

// persistence
POLYSWARM_DEFINE_ERROR(StorageError);

#undef POLYSWARM_DEFINE_ERROR

// Malformed payload. Carries the offending record id (market data) or the raw
// text (agent responses) so callers can log what was rejected.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string context)
      : Error(what), context_(std::move(context)) {}
  const std::string& context() const noexcept { return context_; }

 private:
  std::string context_;
};

}  // namespace polyswarm
