#pragma once

namespace mfc {

inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace mfc
