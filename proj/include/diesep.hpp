#pragma once

#include "diesep/coincidence.hpp"
#include "diesep/detect.hpp"
#include "diesep/error.hpp"
#include "diesep/geometry.hpp"
#include "diesep/json_io.hpp"
#include "diesep/layout_io.hpp"
#include "diesep/least_squares.hpp"
#include "diesep/mkid.hpp"
#include "diesep/quadrature.hpp"
#include "diesep/random.hpp"
#include "diesep/resfit.hpp"
#include "diesep/trace_io.hpp"
#include "diesep/tracegen.hpp"
