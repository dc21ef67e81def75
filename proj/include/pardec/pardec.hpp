#pragma once

#include "pardec/config.hpp"
#include "pardec/decoherence.hpp"
#include "pardec/decomposition.hpp"
#include "pardec/dynamics.hpp"
#include "pardec/error.hpp"
#include "pardec/fock_oracle.hpp"
#include "pardec/master_equation.hpp"
#include "pardec/models.hpp"
#include "pardec/phase_space.hpp"
#include "pardec/scenario.hpp"
