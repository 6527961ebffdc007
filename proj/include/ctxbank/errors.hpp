#pragma once

#include <stdexcept>
#include <string>

namespace ctxbank {

// Root of the library's error hierarchy. Every throwing operation documents
// which subclass it raises; callers that only need "did it work" can catch
// this base.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- bank merge errors ------------------------------------------------------

// Decision references an entry id that does not exist or is retracted.
class UnknownTarget : public Error {
 public:
  using Error::Error;
};

// CONFIRM/REVISE across memory types (appearance cue aimed at a behavior
// entry, etc.).
class TypeMismatch : public Error {
 public:
  using Error::Error;
};

// Decision is structurally invalid: wrong candidate id, missing target,
// REVISE without a replacement descriptor, target on an ADD/DROP.
class MalformedDecision : public Error {
 public:
  using Error::Error;
};

// Hybrid view asked to inline an entry id that is not active in the bank.
class UnknownRequestedId : public Error {
 public:
  using Error::Error;
};

// --- gateway errors ---------------------------------------------------------

// Model output did not contain the structure a parser requires.
class ParseFailure : public Error {
 public:
  using Error::Error;
};

// Network-level failure talking to a remote backend (after retries).
class TransportError : public Error {
 public:
  using Error::Error;
};

// Prompt carries more media segments than the backend accepts.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

// Scripted backend has no recorded response for the prompt's canonical key.
class NoScriptEntry : public Error {
 public:
  using Error::Error;
};

// --- media / persistence errors ----------------------------------------------

class UnknownClip : public Error {
 public:
  using Error::Error;
};

class FrameOutOfRange : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Persisted file declares a schema version this build does not read.
class SchemaVersionMismatch : public Error {
 public:
  using Error::Error;
};

// Manifest / bank / log json is missing a field or holds the wrong type.
// Messages carry the offending instance id and field path.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// --- metric errors ------------------------------------------------------------

// Binary macro accuracy needs at least one gold Yes and one gold No.
class MissingClass : public Error {
 public:
  using Error::Error;
};

class EmptySet : public Error {
 public:
  using Error::Error;
};

class EmptyLog : public Error {
 public:
  using Error::Error;
};

// Bounding box with zero width or height after clamping.
class DegenerateBox : public Error {
 public:
  using Error::Error;
};

// --- configuration ------------------------------------------------------------

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctxbank
