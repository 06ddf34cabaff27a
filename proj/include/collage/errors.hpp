#pragma once

#include <stdexcept>
#include <string>

namespace collage {

// Invalid user input: bad manifests, spans, placements, configs.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Failures raised by (or on behalf of) a diffusion backend.
class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OccludedLayerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InversionDivergedError : public std::runtime_error {
public:
    InversionDivergedError(int step, const std::string& what)
        : std::runtime_error(what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

}  // namespace collage
