#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hhmm {

// Malformed or inconsistent input data (files, sequences, schemas).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical breakdown during inference or learning.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every state in a slot has zero likelihood once transitions are applied.
class UnderflowError : public NumericalError {
public:
    UnderflowError(std::ptrdiff_t slot, const std::string& what)
        : NumericalError(what), slot_(slot) {}
    std::ptrdiff_t slot() const noexcept { return slot_; }

private:
    std::ptrdiff_t slot_;
};

// A hidden state whose posterior mass vanished during EM.
class StateCollapseError : public NumericalError {
public:
    StateCollapseError(int state, const std::string& what)
        : NumericalError(what), state_(state) {}
    int state() const noexcept { return state_; }

private:
    int state_;
};

}  // namespace hhmm
