#pragma once

#include "background.hpp"
#include "bspline.hpp"
#include "detect.hpp"
#include "eval.hpp"
#include "grid.hpp"
#include "harmonics.hpp"
#include "synthetic.hpp"
