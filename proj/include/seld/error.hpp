#pragma once

#include <stdexcept>
#include <string>

namespace seld {

// Bad or inconsistent user input. The CLI maps these to exit code 1.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyInputError : public InputError {
public:
    using InputError::InputError;
};

class ShapeError : public InputError {
public:
    using InputError::InputError;
};

class FormatError : public InputError {
public:
    using InputError::InputError;
};

// More than n_tracks same-class events in one label frame.
class CapacityError : public InputError {
public:
    using InputError::InputError;
};

// NaN/Inf or diverging computation. Exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace seld
