#pragma once

#include <stdexcept>
#include <string>

namespace ghzlab {

/// Base of every exception thrown by the library.
///
/// The category decides how command-line front ends report the failure:
/// bad or inconsistent input versus a numerical procedure that could not
/// produce a trustworthy answer.
class Error : public std::runtime_error {
 public:
  enum class Category { input, numerical };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

#define GHZLAB_DEFINE_ERROR(Name, Cat)                                  \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what)                              \
        : Error(Category::Cat, std::string(#Name ": ") + what) {}       \
  }

GHZLAB_DEFINE_ERROR(InvalidState, input);
GHZLAB_DEFINE_ERROR(MalformedInput, input);
GHZLAB_DEFINE_ERROR(ConfigError, input);
GHZLAB_DEFINE_ERROR(UnknownScenario, input);
GHZLAB_DEFINE_ERROR(EmptySetting, input);
GHZLAB_DEFINE_ERROR(InsufficientData, input);
GHZLAB_DEFINE_ERROR(UnsortedInput, input);
GHZLAB_DEFINE_ERROR(ScheduleGap, input);
GHZLAB_DEFINE_ERROR(NoOverlap, input);
GHZLAB_DEFINE_ERROR(MissingBudget, input);

GHZLAB_DEFINE_ERROR(DegenerateScan, numerical);
GHZLAB_DEFINE_ERROR(NoPeak, numerical);
GHZLAB_DEFINE_ERROR(FitFailed, numerical);
GHZLAB_DEFINE_ERROR(NotConverged, numerical);

#undef GHZLAB_DEFINE_ERROR

}  // namespace ghzlab
