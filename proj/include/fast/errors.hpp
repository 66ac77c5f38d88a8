#pragma once

#include <stdexcept>
#include <string>

namespace fast {

// Error taxonomy used across the toolkit. Everything derives from Error so
// the CLI can catch one type, print the message on stderr and exit nonzero.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape disagreement (matmul inner dims, adam param/grad mismatch, ...).
class ShapeError : public Error {
public:
    using Error::Error;
};

// Caller violated an operation's contract (non-scalar backward root, empty
// pair set, occupied stamp slot, missing base-distribution cache, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

// Malformed input data: bad prompt (zero/multiple masks), out-of-range patch,
// schema violations in knowledge files.
class ValidationError : public Error {
public:
    using Error::Error;
};

// A word is not in the tokenizer vocabulary.
class VocabError : public Error {
public:
    using Error::Error;
};

// Corpus-spec rejection (e.g. rho outside (0.5, 1]).
class SpecError : public Error {
public:
    using Error::Error;
};

// File I/O and checkpoint decoding failures.
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite loss during optimization; carries the iteration index in the message.
class TrainingDivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace fast
