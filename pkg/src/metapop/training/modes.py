"""The six population training modes and their buffer routing.

Act groups pair agents for rollouts: ``MM`` is main with main, ``MP`` main
with one sampled partner head, ``PP`` two sampled partner heads.  A
transition is stored for a loss exactly when that agent's objective contains
the matching cooperation term:

* MM, both seats -> buffer A when the main objective has main self-play;
* MP, main seat  -> buffer A always;
* MP, partner seat -> buffer B when the partner objective has J(main, partner);
* PP, both seats -> buffer B when the partner objective has partner self-play.
"""
from __future__ import annotations

from dataclasses import dataclass

MM, MP, PP = "MM", "MP", "PP"
MAIN_SIDE, PARTNER_SIDE = "main", "partner"
BUFFER_A, BUFFER_B = "A", "B"

MODES = ("I", "II", "III", "IV", "V", "VI")


@dataclass(frozen=True)
class ModeSpec:
    mode: str
    act_groups: tuple[str, ...]
    main_self_play: bool
    partner_self_play: bool
    partner_with_main: bool

    def route(self, group: str, side: str) -> str | None:
        """Buffer that receives a transition, or None when it is discarded.

        In MM both seats are main seats; in PP both are partner seats.
        """
        if group not in self.act_groups:
            return None
        if group == MM:
            return BUFFER_A if self.main_self_play else None
        if group == MP:
            if side == MAIN_SIDE:
                return BUFFER_A
            return BUFFER_B if self.partner_with_main else None
        if group == PP:
            return BUFFER_B if self.partner_self_play else None
        raise ValueError(f"unknown act group {group!r}")

    def routing(self) -> dict[tuple[str, str], str | None]:
        sides = {MM: (MAIN_SIDE,), MP: (MAIN_SIDE, PARTNER_SIDE), PP: (PARTNER_SIDE,)}
        return {(g, s): self.route(g, s) for g in self.act_groups for s in sides[g]}

    def main_terms(self) -> tuple[str, ...]:
        return (("J(m,m)",) if self.main_self_play else ()) + ("sum J(m,p_i)",)

    def partner_terms(self) -> tuple[str, ...]:
        terms = ()
        if self.partner_self_play:
            terms += ("J(p_i,p_i)",)
        if self.partner_with_main:
            terms += ("J(m,p_i)",)
        return terms


_TABLE = {
    #        act groups        main SP  partner SP  partner w/ main
    "I": ((MP,), False, False, True),
    "II": ((MM, MP), True, False, True),
    "III": ((MP, PP), False, True, False),
    "IV": ((MM, MP, PP), True, True, False),
    "V": ((MP, PP), False, True, True),
    "VI": ((MM, MP, PP), True, True, True),
}

# Self-play only: the main agent plays itself and nothing else.
SELF_PLAY = ModeSpec("SP", (MM,), True, False, False)


def mode_spec(mode: str) -> ModeSpec:
    key = str(mode).upper()
    if key not in _TABLE:
        raise ValueError(f"unknown training mode {mode!r}; expected one of {MODES}")
    groups, main_sp, partner_sp, partner_wm = _TABLE[key]
    return ModeSpec(key, groups, main_sp, partner_sp, partner_wm)
