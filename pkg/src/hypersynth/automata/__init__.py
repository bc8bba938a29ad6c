from .guards import TRUE_CUBE, atom_order, valuation, split, prop_cubes
from .nba import Nba, ltl_to_nba, AutomatonTooLarge, NBA_STATE_CAP
from .dra import Dra, ltl_to_dra, determinize_to_dra, dra_accepts_lasso, minimize, DRA_STATE_CAP
from .hoa import dump_hoa, parse_hoa, read_hoa, write_hoa, HoaError
