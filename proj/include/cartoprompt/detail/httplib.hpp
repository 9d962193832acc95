#pragma once

#include "httplib.h"

// <resolv.h>, pulled in by httplib, defines `_res` as a macro. Eigen and other
// templates use `_res` as an identifier, so drop it here.
#ifdef _res
#undef _res
#endif
