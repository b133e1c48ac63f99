from .options import *
