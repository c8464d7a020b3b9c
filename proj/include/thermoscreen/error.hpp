#pragma once

#include <stdexcept>
#include <string>

namespace thermoscreen {

// Base for every error raised by the library. Catch this to handle all of them.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define THERMOSCREEN_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& what) : Error(#Name ": " + what) \
        {}                                                                \
    }

// geometry
THERMOSCREEN_DEFINE_ERROR(SingularTransform);
THERMOSCREEN_DEFINE_ERROR(DegenerateInput);
THERMOSCREEN_DEFINE_ERROR(NoConsensus);
THERMOSCREEN_DEFINE_ERROR(LengthMismatch);
THERMOSCREEN_DEFINE_ERROR(EmptyInput);
THERMOSCREEN_DEFINE_ERROR(DegenerateGeometry);
THERMOSCREEN_DEFINE_ERROR(ParseError);

// detection / losses
THERMOSCREEN_DEFINE_ERROR(InvalidConfig);
THERMOSCREEN_DEFINE_ERROR(Overflow);
THERMOSCREEN_DEFINE_ERROR(InvalidLabel);
THERMOSCREEN_DEFINE_ERROR(DimensionMismatch);

// thermal
THERMOSCREEN_DEFINE_ERROR(BadMagic);
THERMOSCREEN_DEFINE_ERROR(TruncatedPayload);
THERMOSCREEN_DEFINE_ERROR(EmptyRoi);
THERMOSCREEN_DEFINE_ERROR(OutOfFrame);

// simulator / agent
THERMOSCREEN_DEFINE_ERROR(InvalidSpec);
THERMOSCREEN_DEFINE_ERROR(CalibrationMissing);
THERMOSCREEN_DEFINE_ERROR(CloudUnreachable);
THERMOSCREEN_DEFINE_ERROR(IoError);

// cloud
THERMOSCREEN_DEFINE_ERROR(BadFilter);

#undef THERMOSCREEN_DEFINE_ERROR

// Raised by run_cascade when a plug-in scorer throws or violates its output arity.
class ScorerFailure : public Error {
public:
    ScorerFailure(std::string stage, const std::string& what)
        : Error("ScorerFailure[" + stage + "]: " + what), stage_(std::move(stage))
    {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace thermoscreen
