#ifndef RUV_RUV_HPP
#define RUV_RUV_HPP

#include "core.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "projections.hpp"
#include "prps.hpp"
#include "ruv3.hpp"
#include "simulate.hpp"

#endif
