#pragma once

#include "tfm/crack_opening.hpp"
#include "tfm/extension.hpp"
#include "tfm/tilt.hpp"
#include "tfm/variable_kernel.hpp"
