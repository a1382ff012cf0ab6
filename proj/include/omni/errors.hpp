#pragma once

#include <stdexcept>
#include <string>

namespace omni {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input that could not be read or parsed (files, JSON, merges tables).
class ConfigError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

// vocab
class OverlapError : public ConfigError {
public:
    using ConfigError::ConfigError;
};
class GapError : public ConfigError {
public:
    using ConfigError::ConfigError;
};
class EmptyRangeError : public ConfigError {
public:
    using ConfigError::ConfigError;
};
class MissingControlError : public ConfigError {
public:
    using ConfigError::ConfigError;
};
class OutOfVocabError : public Error {
public:
    using Error::Error;
};

// constraint
class EmptyConstraintError : public Error {
public:
    using Error::Error;
};
class LengthMismatchError : public Error {
public:
    using Error::Error;
};

// engine
class InvalidPromptError : public Error {
public:
    using Error::Error;
};
class SessionFinishedError : public Error {
public:
    using Error::Error;
};
class DegenerateDistributionError : public Error {
public:
    using Error::Error;
};

// audio_bpe
class EmptyCorpusError : public Error {
public:
    using Error::Error;
};
class AlphabetError : public Error {
public:
    using Error::Error;
};
class UnknownSymbolError : public Error {
public:
    using Error::Error;
};

// moe
class UnknownModalityError : public Error {
public:
    using Error::Error;
};

// genbridge (ShapeMismatchError is shared with moe)
class ShapeMismatchError : public Error {
public:
    using Error::Error;
};
class NonIncreasingScalesError : public ConfigError {
public:
    using ConfigError::ConfigError;
};
class EmptyScaleListError : public ConfigError {
public:
    using ConfigError::ConfigError;
};
class OutOfGridError : public Error {
public:
    using Error::Error;
};
class MarkerMismatchError : public Error {
public:
    using Error::Error;
};
class LengthError : public Error {
public:
    using Error::Error;
};

}  // namespace omni
