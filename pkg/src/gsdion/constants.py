"""Physical constants and the experiment's published operating point."""

import math

from scipy import constants as _c

HBAR = _c.hbar
C_LIGHT = _c.c
AMU = _c.atomic_mass

# Yb+ 2S1/2 - 2P1/2 transition
WAVELENGTH = 369.5e-9
GAMMA = 2 * math.pi * 19.6e6
BETA_BRIGHT = 2.0 / 3.0
I_SAT_QUOTED = 510.0  # W/m^2

NA = 0.1
PUPIL_DIAMETER = 7.1e-3

# DMD
DMD_SHAPE = (1080, 1920)
DMD_REGION = 660
MIRROR_PITCH = 10.8e-6
GRATING_PERIOD = 10
PATCH_SIZE = 20
# carrier tilt for sensing holograms: 9 mirrors of fringe shift per 20 rows
# visits all 20 sub-mirror fringe offsets inside every patch
SENSING_TILT = 0.45
MAX_SWITCH_RATE = 17857.0
SWITCH_TIME = 6e-6

# Focused spots
FWHM00 = 2.34e-6
FWHM01 = 1.41e-6
FWHM01_FIG9 = 1.4e-6
FWHM_RATIO_00_01 = 1.67
EXTINCTION_RATIO = 26.0
BEST_RESOLUTION = 175e-9  # image FWHM at s_max = 14, t_D = 7 us
IMAGING_S_MAX = 14.0
IMAGING_PULSE = 7e-6

# Imaging sequence
COOLING_TIME = 1e-3
PUMP_TIME = 50e-6
DETECT_TIME = 0.55e-3  # makes one 100-shot pixel take 0.16 s
SHOTS = 100
READOUT_ERROR = 0.05
WAVEPACKET_RMS = 20e-9
DRIFT_SPEED = 1.8e-9
DRIFT_BOUND = 60e-9

# Trap / motion
ION_MASS = 171 * AMU
OMEGA_Y = 2 * math.pi * 1.36e6
MOTION_PERIOD = 2 * math.pi / OMEGA_Y
DRIVE_CYCLES = 100
DRIVE_FORCE = 6.9e-21
MOTION_S_MAX = 450.0
MOTION_PULSE = 50e-9
MOTION_AREA = 1.25e-6
MOTION_POINTS = 10

# Depletion pulse shaping (AOM)
RISE_TIME = 23e-9
FALL_TIME = 25e-9

# Voltage stabilization
SET_POINT = 0.39
LOOP_RATE = 2.0
ADC_RESOLUTION = 1e-6
DAC_BITS = 24
ATTENUATION_DB = 20.0
FREQUENCY_BUDGET = 7e3
