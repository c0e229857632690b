#pragma once

#ifndef SUBDIFF_GIT_REVISION
#define SUBDIFF_GIT_REVISION "unknown"
#endif

namespace subdiff {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kGitRevision = SUBDIFF_GIT_REVISION;

}  // namespace subdiff
