"""Node state machine of the compact leader-election protocol.

Every predicate of the catalog is a method of :class:`NodeEval`; the rule
table picks the first enabled guard and :func:`apply_rule` runs the matching
command.  All functions are pure over immutable views.
"""

from __future__ import annotations

from enum import Enum
from functools import lru_cache
from typing import NamedTuple, Optional, Tuple

from .identifiers import bit_position, msb_position

PLUS = "+"
OK = "ok"
CLEAN = (-1, -1)

Cell = Optional[Tuple[int, int]]


class Elec(NamedTuple):
    bit_strong: int
    phase: int
    bit_position: int
    control: int
    # bit position the root held in the previous phase (cyclically)
    prev_position: int = -1


RESET_ELEC = Elec(-1, 0, -1, -1, -1)


def previous_phase(phase: int, last: int) -> int:
    return last if phase == 1 else phase - 1


class NodeState(NamedTuple):
    leader: int = 0
    p: Optional[int] = None
    d: int = -1
    dB: int = 0
    b_hat: int = -1
    elec: Elec = RESET_ELEC
    add: Optional[str] = None
    pl: Cell = None
    hc: Cell = None
    lost: int = 0


RESET_STATE = NodeState()


class NodeView(NamedTuple):
    """What a node reads in one step: itself, its id and both neighbours.

    ``back[j]`` is the port number that neighbour ``j`` uses for this node.
    """

    own: NodeState
    ident: int
    nbrs: Tuple[NodeState, NodeState]
    back: Tuple[int, int]


class RuleId(str, Enum):
    ERROR = "Error"
    START = "Start"
    PASSIVE = "Passive"
    ROOT_STARTDB = "Root_StartdB"
    ROOT_INC = "Root_Inc"
    UPDATE = "Update"
    HYPER_BINADD = "Hyper_BinAdd"
    HYPER_BROAD = "Hyper_Broad"
    HYPER_VERIF = "Hyper_Verif"
    HYPER_CLEANM = "Hyper_CleanM"


PORTS = (0, 1)


def _pos(cell: Cell) -> Optional[int]:
    return None if cell is None else cell[0]


def _bit(cell: Cell) -> Optional[int]:
    return None if cell is None else cell[1]


def _head(e: Elec) -> Tuple[int, int, int]:
    return (e.bit_strong, e.phase, e.bit_position)


class NodeEval:
    """Lazily evaluated predicate catalog for one node view."""

    __slots__ = ("v", "ident", "nb", "back", "_cache")

    def __init__(self, view: NodeView):
        self.v = view.own
        self.ident = view.ident
        self.nb = view.nbrs
        self.back = view.back
        self._cache: dict = {}

    def _memo(self, key, fn):
        c = self._cache
        if key not in c:
            c[key] = fn()
        return c[key]

    # ----- basic accessors -----
    @property
    def parent(self) -> Optional[NodeState]:
        p = self.v.p
        return None if p is None else self.nb[p]

    def last_phase(self) -> int:
        return self.v.b_hat + 1

    # ----- children -----
    def eq_bhat(self) -> frozenset:
        return self._memo("eq_bhat", self._eq_bhat)

    def _eq_bhat(self) -> frozenset:
        v = self.v
        return frozenset(
            j for j in PORTS
            if self.nb[j].b_hat == v.b_hat and self.nb[j].elec.bit_strong == v.elec.bit_strong
        )

    def eq_elec_p(self) -> bool:
        par = self.parent
        return par is not None and _head(par.elec) == _head(self.v.elec)

    def eq_elec(self, ports) -> frozenset:
        h = _head(self.v.elec)
        return frozenset(j for j in ports if _head(self.nb[j].elec) == h)

    def inf_ph(self) -> frozenset:
        return self._memo("inf_ph", self._inf_ph)

    def _inf_ph(self) -> frozenset:
        ph = self.v.elec.phase
        last = self.last_phase()
        return frozenset(
            j for j in self.eq_bhat()
            if self.nb[j].elec.phase == ph - 1 or (ph == 1 and self.nb[j].elec.phase == last)
        )

    def sup_ph(self) -> frozenset:
        return self._memo("sup_ph", self._sup_ph)

    def _sup_ph(self) -> frozenset:
        ph = self.v.elec.phase
        last = self.last_phase()
        return frozenset(
            j for j in self.eq_bhat()
            if self.nb[j].elec.phase == ph + 1 or (ph == last and self.nb[j].elec.phase == 1)
        )

    def cand_c(self) -> frozenset:
        return self.eq_elec(self.eq_bhat()) | self.inf_ph()

    def ch(self) -> frozenset:
        return self._memo("ch", self._ch)

    def _ch(self) -> frozenset:
        v = self.v
        if v.d < 0 or v.b_hat < 1:
            return frozenset()
        out = []
        for j in self.cand_c():
            u = self.nb[j]
            if u.p != self.back[j]:
                continue
            if (v.d < v.b_hat and u.d == v.d + 1) or (v.d in (0, v.b_hat) and u.d == 1):
                out.append(j)
        return frozenset(out)

    def vch(self, field: str, target) -> bool:
        return all(getattr(self.nb[j], field) == target for j in self.ch())

    def vch_elec(self, index: int, target) -> bool:
        return all(self.nb[j].elec[index] == target for j in self.ch())

    # ----- election -----
    def max_bhat(self) -> int:
        return max(u.elec.bit_strong for u in self.nb)

    def best(self) -> Optional[int]:
        return self._memo("best", self._best)

    def _best(self) -> Optional[int]:
        v = self.v
        m = self.max_bhat()
        if m > v.b_hat:
            return min(j for j in PORTS if self.nb[j].elec.bit_strong == m)
        e = v.elec
        behind, ahead = self.inf_ph(), self.sup_ph()
        scored = []
        for j in self.eq_bhat():
            u = self.nb[j].elec
            if u.phase == e.phase:
                # from phase 2 on, the previous bit is compared first
                if e.phase >= 2:
                    mine, theirs = (e.prev_position, e.bit_position), (u.prev_position, u.bit_position)
                else:
                    mine, theirs = (e.bit_position,), (u.bit_position,)
                if theirs > mine:
                    scored.append((theirs[-1], j))
            elif j in behind:
                # compare at the neighbour's phase using our previous bit
                if u.bit_position > e.prev_position:
                    scored.append((u.bit_position, j))
            elif j in ahead:
                if u.prev_position > e.bit_position:
                    scored.append((u.prev_position, j))
        if not scored:
            return None
        top = max(sc for sc, _ in scored)
        return min(j for sc, j in scored if sc == top)

    @staticmethod
    def pass_0(x: NodeState) -> bool:
        return x.d == 0 and x.pl == (1, 0)

    @staticmethod
    def pass_db(x: NodeState) -> bool:
        return (
            NodeEval.pass_0(x)
            or (0 < x.d < x.b_hat and _pos(x.hc) == x.d + 1)
            or (x.d == x.b_hat and x.d > 0 and _pos(x.pl) == 1)
        )

    def eq_me_i(self, i: int, ports) -> frozenset:
        mine = self.v.elec[: i + 1]
        return frozenset(j for j in ports if self.nb[j].elec[: i + 1] == mine)

    def eq_me_x(self, i: int, x: int, ports) -> frozenset:
        return frozenset(j for j in ports if self.nb[j].elec[i] == x)

    def wave_b(self) -> bool:
        ch = self.ch()
        if not ch:
            return True
        return self.eq_me_i(2, ch) == ch and self.eq_me_x(3, 1, ch) == ch

    def t_pass(self) -> bool:
        return self._memo("t_pass", self._t_pass)

    def _t_pass(self) -> bool:
        if self.v.d < 0:
            return False
        b = self.best()
        return b is not None and self.pass_db(self.nb[b]) and self.wave_b()

    def other(self) -> frozenset:
        rest = set(PORTS) - self.ch() - self.sup_ph()
        return self.eq_me_i(2, rest)

    def t_inc(self) -> bool:
        covered = self.ch() | self.sup_ph() | self.other()
        return self.root() and self.wave_b() and covered == frozenset(PORTS)

    def d_coherent(self) -> bool:
        v, par = self.v, self.parent
        if par is None or not (1 <= v.d <= v.b_hat):
            return False
        return (0 <= par.d < v.b_hat and v.d == par.d + 1) or (par.d in (0, v.b_hat) and v.d == 1)

    def coh_p(self) -> bool:
        par = self.parent
        return (
            self.best() is None
            and par is not None
            and par.b_hat == self.v.b_hat
            and self.d_coherent()
        )

    def up_p(self) -> bool:
        v, par = self.v, self.parent
        if par is None:
            return False
        ph = v.elec.phase
        return par.elec.control == 0 and par.elec.bit_strong == v.elec.bit_strong and (
            par.elec.phase == ph + 1 or (ph == self.last_phase() and par.elec.phase == 1)
        )

    def up_e(self) -> bool:
        par = self.parent
        return self.v.elec.control == 0 and par is not None and par.elec.control == 0

    def up_back(self) -> bool:
        if not self.up_e() or not self.eq_elec_p():
            return False
        allowed = self.eq_me_i(2, PORTS) | self.sup_ph()
        ch = self.ch()
        return allowed == frozenset(PORTS) and self.eq_me_x(3, 1, ch) == ch and self.eq_me_i(2, ch) == ch

    def t_update(self) -> bool:
        return self._memo("t_update", self._t_update)

    def _t_update(self) -> bool:
        if self.v.d <= 0:
            return False
        return (self.coh_p() and self.up_p() and self.wave_b()) or self.up_back()

    # ----- hyper-node addition -----
    def add_nd(self) -> bool:
        v = self.v
        return v.add is None and v.pl is None and (bool(self.ch()) or v.d == v.b_hat)

    def add_p(self) -> bool:
        v, par = self.v, self.parent
        return (v.d > 1 and par is not None and par.add is None) or v.d == 1

    def add_ch(self) -> bool:
        v = self.v
        return (v.d < v.b_hat and self.vch("pl", None)) or (v.d == v.b_hat and self.vch("hc", None))

    def add_plus(self) -> bool:
        return self.v.d == self.v.b_hat or (self.vch("add", PLUS) and self.vch("dB", 1))

    def add_ok(self) -> bool:
        return self.vch("add", OK) or (self.vch("add", PLUS) and self.vch("dB", 0))

    def t_add(self) -> bool:
        return self.add_nd() and self.add_p() and self.add_ch() and (self.add_plus() or self.add_ok())

    # ----- hyper-node broadcast -----
    def mch(self, target) -> bool:
        v = self.v
        field = "pl" if v.d < v.b_hat else "hc" if v.d == v.b_hat else None
        if field is None:
            return False
        # children that joined after position 1 went by wait for the next cycle
        late = target is not None and target != CLEAN and target[0] > 1
        return all(
            getattr(self.nb[j], field) == target or (late and getattr(self.nb[j], field) is None)
            for j in self.ch()
        )

    def mch_passed(self) -> bool:
        """Every child has consumed the published cell (it holds it or moved past)."""
        v = self.v
        mine = _pos(v.pl)
        if v.d < v.b_hat:
            return all((_pos(self.nb[j].pl) or 0) >= mine for j in self.ch())
        return all(
            self.nb[j].hc in (None, CLEAN) or _pos(self.nb[j].hc) >= mine for j in self.ch()
        )

    def broad_db(self) -> bool:
        v = self.v
        return (v.d == 1 and v.pl is None) or (
            v.d > 1 and v.pl is not None and v.pl[0] == v.d - 1 and self.mch(v.pl)
        )

    def broad_p1(self) -> bool:
        par = self.parent
        return self.v.pl is None and par is not None and _pos(par.pl) == 1 and self.mch(None)

    def broad_pg(self) -> bool:
        v, par = self.v, self.parent
        return (
            v.pl is not None
            and par is not None
            and self.mch(v.pl)
            and _pos(par.pl) == v.pl[0] + 1
            and v.pl[0] != v.d - 1
        )

    def broad_p(self) -> bool:
        return self.v.d > 1 and (self.broad_p1() or self.broad_pg())

    def t_broad(self) -> bool:
        return (bool(self.ch()) or self.v.d == self.v.b_hat) and (self.broad_db() or self.broad_p())

    # ----- verification -----
    def _mp(self, which: str) -> Optional[int]:
        par = self.parent
        return None if par is None else _pos(getattr(par, which))

    def vrf_last(self, which: str) -> bool:
        m = self._mp(which)
        return not self.ch() and m is not None and m >= self.v.d + 1

    def vrf_start(self, which: str) -> bool:
        return bool(self.ch()) and self._mp(which) == self.v.d + 1 and self.vch("hc", None)

    def vrf_broad(self, which: str) -> bool:
        m = self._mp(which)
        if not self.ch() or m is None or m <= self.v.d:
            return False
        mine = self.v.hc
        late = _pos(mine) is not None and _pos(mine) > self.v.d + 1
        return all(self.nb[j].hc == mine or (late and self.nb[j].hc is None) for j in self.ch())

    def vrf(self, which: str) -> bool:
        return self.vrf_last(which) or self.vrf_start(which) or self.vrf_broad(which)

    def vrf_1(self) -> bool:
        hc = _pos(self.v.hc)
        return self.v.d == 1 and hc is not None and self._mp("pl") == hc + 1 and self.vrf("pl")

    def vrf_g(self) -> bool:
        hc = _pos(self.v.hc)
        return (
            self.v.d > 1
            and hc is not None
            and self._mp("hc") == hc + 1
            and self.eq_elec_p()
            and self.vrf("hc")
        )

    def vrf_1g(self) -> bool:
        d = self.v.d
        return (d == 1 and self._mp("pl") == 1) or (d > 1 and self._mp("hc") == d)

    def t_verif(self) -> bool:
        hc = self.v.hc
        if hc is None:
            return self.vrf_1g()
        if hc == CLEAN:
            return False
        return self.vrf_1() or self.vrf_g()

    # ----- memory cleanup -----
    def eq_elec_n(self) -> bool:
        ports = set(self.ch())
        if self.v.p is not None:
            ports.add(self.v.p)
        return bool(ports) and self.eq_me_i(2, ports) == frozenset(ports)

    def cleanm_v1a(self) -> bool:
        v = self.v
        return (
            self.eq_elec_n()
            and _pos(v.hc) == v.b_hat
            and (v.d == v.b_hat or all(self.nb[j].hc in (CLEAN, None) for j in self.ch()))
        )

    def cleanm_v1b(self) -> bool:
        v = self.v
        return (
            self.eq_elec_n()
            and v.hc == (v.b_hat, 0)
            and (v.d == v.b_hat or self.vch("hc", None))
        )

    def vhc(self) -> bool:
        par = self.parent
        return self.v.hc == CLEAN and par is not None and par.hc == CLEAN

    def cleanm_va(self) -> bool:
        v = self.v
        return self.vhc() and (
            (v.d < v.b_hat and self.vch("hc", None)) or (v.d == v.b_hat and self.vch("pl", None))
        )

    def cleanm_vb(self) -> bool:
        return self.v.hc == CLEAN and self.v.d == 1 and self.vch("hc", None)

    def cleanm_vd(self) -> bool:
        v = self.v
        return v.d < v.b_hat and bool(self.ch()) and self.vch("hc", None)

    def cleanm_vc(self) -> bool:
        v = self.v
        return _pos(v.hc) == v.b_hat and ((v.d == v.b_hat and not self.ch()) or self.cleanm_vd())

    def cleanm_c(self) -> bool:
        v, par = self.v, self.parent
        return (
            v.pl is not None
            and v.pl[0] == v.d
            and self.mch_passed()
            and ((par is not None and par.pl is None and v.d > 1) or v.d == 1)
        )

    def t_cleanm(self) -> bool:
        return (
            self.cleanm_v1a()
            or self.cleanm_v1b()
            or self.cleanm_va()
            or self.cleanm_vb()
            or self.cleanm_c()
        )

    # ----- root -----
    def root(self) -> bool:
        v = self.v
        return (
            v.leader == 1
            and v.d == 0
            and v.p is None
            and v.b_hat == msb_position(self.ident)
            and v.lost == 0
            and 1 <= v.elec.phase <= self.last_phase()
            and v.elec.control in (0, 1)
        )

    def t_startdb(self) -> bool:
        v = self.v
        if not self.root() or v.pl is None:
            return False
        if not self.ch():
            # park at position 1 so that neighbours can join
            return v.pl != (1, 0)
        if v.b_hat < 2:
            return False
        # a child that joined mid-cycle keeps HC empty until position 1 comes back
        if all(self.nb[j].hc == v.pl or (self.nb[j].hc is None and v.pl[0] > 1)
               for j in self.ch()):
            return True
        return v.pl[0] == v.b_hat and all(self.nb[j].hc in (None, CLEAN) for j in self.ch())

    # ----- reset / start -----
    @staticmethod
    def m_reset(x: NodeState) -> bool:
        return x.dB == 0 and x.add is None and x.hc is None

    @staticmethod
    def v_reset(x: NodeState) -> bool:
        return x.leader == 0 and x.d == -1 and x.b_hat == -1 and x.elec == RESET_ELEC

    @staticmethod
    def nd_reset_state(x: NodeState) -> bool:
        return x == RESET_STATE

    def nd_reset(self) -> bool:
        return self.nd_reset_state(self.v)

    @staticmethod
    def nd_start_state(x: NodeState, ident: int) -> bool:
        top = msb_position(ident)
        return (
            NodeEval.m_reset(x)
            and x.pl is not None
            and x.leader == 1
            and x.d == 0
            and x.p is None
            and x.b_hat == top
            and x.lost == 0
            and x.elec[:3] == (top, 1, top)
            and x.elec.control in (0, 1)
            and x.elec.prev_position == bit_position(top + 1, ident)
        )

    def nd_start(self) -> bool:
        return self.nd_start_state(self.v, self.ident)

    def ng_reset(self) -> frozenset:
        return frozenset(j for j in PORTS if self.nd_reset_state(self.nb[j]))

    def ng_start(self) -> frozenset:
        # a neighbour's own id is not readable; its start shape is checked on
        # the fields it publishes (Bit-Strong equals B-hat and phase 1)
        out = []
        for j in PORTS:
            x = self.nb[j]
            if (
                self.m_reset(x)
                and x.pl is not None
                and x.leader == 1
                and x.d == 0
                and x.p is None
                and x.lost == 0
                and x.elec[:3] == (x.b_hat, 1, x.b_hat)
                and x.elec.control in (0, 1)
            ):
                out.append(j)
        return frozenset(out)

    def t_reset(self) -> bool:
        return not self.nd_reset() and not self.nd_start() and len(self.ng_reset()) > 0

    def t_start(self) -> bool:
        return self.nd_reset() and (self.ng_reset() | self.ng_start()) == frozenset(PORTS)

    def pass_nd(self) -> bool:
        v = self.v
        return (
            v.leader == 0
            and v.d > 0
            and v.p is not None
            and v.d <= v.b_hat
            and v.b_hat >= msb_position(self.ident)
            and v.elec.bit_strong == v.b_hat
            and 1 <= v.elec.phase <= self.last_phase()
            and v.elec.control in (0, 1)
            and (self.best() is not None or self.coh_p())
        )

    def er_d(self) -> bool:
        return self.v.d > 0 and self.best() is None and not self.d_coherent()

    def er_nd(self) -> bool:
        return (not self.root() and not self.pass_nd() and not self.nd_reset()) or (
            self.pass_nd() and self.er_d()
        )

    # ----- phase errors -----
    def ng_ph(self) -> list:
        return [self.nb[j].elec.phase for j in self.eq_bhat()]

    def er_ph_min_b(self) -> bool:
        ph, last, phs = self.v.elec.phase, self.last_phase(), self.ng_ph()
        return bool(phs) and ph == last and min(phs) not in (1, last - 1, last)

    def er_ph_min_g(self) -> bool:
        ph, phs = self.v.elec.phase, self.ng_ph()
        return bool(phs) and ph != self.last_phase() and ph - min(phs) > 1

    def er_ph_max_1(self) -> bool:
        ph, phs = self.v.elec.phase, self.ng_ph()
        return bool(phs) and ph == 1 and max(phs) not in (1, 2, self.last_phase())

    def er_ph_max_g(self) -> bool:
        ph, phs = self.v.elec.phase, self.ng_ph()
        return bool(phs) and ph != 1 and max(phs) - ph > 1

    def er_phase(self) -> bool:
        return self.er_ph_min_b() or self.er_ph_min_g() or self.er_ph_max_1() or self.er_ph_max_g()

    def er_bp(self) -> bool:
        v = self.v
        if v.d <= 0:
            return False
        same = [
            j for j in self.eq_bhat()
            if self.nb[j].elec.phase == v.elec.phase
            and self.nb[j].elec.bit_position == v.elec.bit_position
        ]
        return not same and not self.sup_ph() and self.best() is None

    def er_control(self) -> bool:
        v, par = self.v, self.parent
        if v.elec.control == 1 and not self.wave_b():
            return True
        return v.elec.control == 0 and par is not None and self.coh_p() and par.elec.control == 1

    # ----- memory errors -----
    def er_mroot(self) -> bool:
        v = self.v
        if v.d != 0:
            return False
        bad_pl = v.pl is None or not (1 <= v.pl[0] <= v.b_hat) or v.pl[1] != 0
        return v.add is not None or v.hc is not None or bad_pl

    def er_madd(self) -> bool:
        v = self.v
        return 0 < v.d < v.b_hat and v.add is not None and bool(self.ch()) and self.vch("add", None)

    def er_pl(self) -> bool:
        v, par = self.v, self.parent
        if v.d <= 1 or v.pl is None:
            return False
        return v.pl[0] > v.d or (
            self.coh_p() and par.pl is None and v.pl[0] < par.d
        )

    def er_hcch(self) -> bool:
        v = self.v
        ch = self.ch()
        return v.d < v.b_hat and v.hc is None and bool(ch) and all(self.nb[j].hc is not None for j in ch)

    def er_hcp(self) -> bool:
        v, par = self.v, self.parent
        if v.d <= 1 or v.hc is None or v.hc == CLEAN or not self.coh_p():
            return False
        return par.hc is not None and par.hc[0] < v.hc[0]

    def er_hc(self) -> bool:
        v = self.v
        if not (0 < v.d < v.b_hat):
            return False
        low = v.hc is not None and v.hc != CLEAN and v.hc[0] < v.d
        return low or self.er_hcch() or self.er_hcp()

    def er_mem(self) -> bool:
        if self.best() is not None:
            return False
        return self.er_mroot() or self.er_madd() or self.er_pl() or self.er_hc()

    def er_t(self) -> bool:
        return self._memo("er_t", self._er_t)

    def _er_t(self) -> bool:
        if self.ng_reset():
            return False
        if self.er_nd():
            return True
        if self.v.d < 0:
            return False
        return self.er_phase() or self.er_bp() or self.er_control() or self.er_mem()

    # ----- hyper-node and election errors -----
    def er_add(self) -> bool:
        v = self.v
        if v.d != 1 or v.dB != 1:
            return False
        if v.add == PLUS:
            return True
        return bool(self.ch()) and v.d < v.b_hat and self.vch("add", PLUS) and self.vch("dB", 1)

    def er_h1(self) -> bool:
        par = self.parent
        return self.v.d == 1 and par is not None and _pos(par.pl) == 1 and par.pl[1] != self.v.dB

    def er_hg(self) -> bool:
        v, par = self.v, self.parent
        return v.d > 1 and par is not None and _pos(par.hc) == v.d and par.hc[1] != v.dB

    def er_hyper(self) -> bool:
        if self.v.d <= 0:
            return False
        if self.er_add():
            return True
        return self.eq_elec_p() and self.coh_p() and (self.er_h1() or self.er_hg())

    def er_elec(self) -> bool:
        v = self.v
        if v.d < 0 or v.elec.phase < 1:
            return False
        top = msb_position(self.ident)
        if v.b_hat != top:
            return False
        own_bit = bit_position(v.elec.phase, self.ident)
        if v.d == 0:
            prev_bit = bit_position(previous_phase(v.elec.phase, self.last_phase()), self.ident)
            return (v.elec.bit_position != own_bit or v.elec.bit_strong != top
                    or v.elec.prev_position != prev_bit)
        return v.elec.bit_strong == top and v.lost == 0 and v.elec.bit_position < own_bit

    def t_er(self) -> bool:
        return self._memo("t_er", lambda: self.er_t() or self.er_hyper() or self.er_elec())


PREDICATES = {
    name: getattr(NodeEval, name)
    for name in dir(NodeEval)
    if not name.startswith("_") and callable(getattr(NodeEval, name))
    and name not in {"parent", "pass_0", "pass_db", "m_reset", "v_reset",
                     "nd_reset_state", "nd_start_state", "vch", "vch_elec",
                     "eq_elec", "eq_me_i", "eq_me_x", "mch", "vrf", "vrf_last",
                     "vrf_start", "vrf_broad", "last_phase"}
}


def eval_predicate(name: str, view: NodeView):
    """Evaluate a catalog predicate (or set-valued macro) by name."""
    try:
        fn = PREDICATES[name]
    except KeyError:
        raise KeyError(f"unknown predicate {name!r}") from None
    return fn(NodeEval(view))


def children(view: NodeView) -> frozenset:
    return NodeEval(view).ch()


@lru_cache(maxsize=1 << 20)
def best(view: NodeView) -> Optional[int]:
    return NodeEval(view).best()


@lru_cache(maxsize=1 << 20)
def trivial_error(view: NodeView) -> bool:
    """Er_T of the viewing node (memoised; the checkers call it every step)."""
    return NodeEval(view).er_t()


def _select(ev: NodeEval) -> Optional[RuleId]:
    v = ev.v
    if ev.t_er() or ev.t_reset():
        return RuleId.ERROR
    if v.d == -1:
        return RuleId.START if ev.t_start() else None
    if ev.t_pass():
        return RuleId.PASSIVE
    if v.d == 0:
        if ev.t_startdb():
            return RuleId.ROOT_STARTDB
        if ev.t_inc():
            return RuleId.ROOT_INC
        return None
    if ev.t_update():
        return RuleId.UPDATE
    if not ev.eq_elec_p():
        return None
    if v.add is None and ev.t_add():
        return RuleId.HYPER_BINADD
    if v.add is not None and ev.t_broad():
        return RuleId.HYPER_BROAD
    if ev.t_verif():
        return RuleId.HYPER_VERIF
    if ev.t_cleanm():
        return RuleId.HYPER_CLEANM
    return None


def _command(ev: NodeEval, rule: RuleId) -> NodeState:
    v = ev.v
    ident = ev.ident
    if rule is RuleId.ERROR:
        return RESET_STATE
    if rule is RuleId.START:
        top = msb_position(ident)
        return NodeState(leader=1, p=None, d=0, dB=0, b_hat=top,
                         elec=Elec(top, 1, top, 0, bit_position(top + 1, ident)), pl=(1, 0))
    if rule is RuleId.PASSIVE:
        j = ev.best()
        x = ev.nb[j]
        if x.d == x.b_hat:
            d, bit = 1, x.pl[1]
        elif x.d == 0:
            d, bit = 1, x.pl[1]
        else:
            d, bit = x.d + 1, x.hc[1]
        return NodeState(leader=0, p=j, d=d, dB=bit, b_hat=x.b_hat, elec=x.elec,
                         add=None, pl=None, hc=None, lost=1)
    if rule is RuleId.ROOT_STARTDB:
        pos = v.pl[0]
        return v._replace(pl=(1, 0) if pos >= v.b_hat else (pos + 1, 0))
    if rule is RuleId.ROOT_INC:
        i = 1 if v.elec.phase >= ev.last_phase() else v.elec.phase + 1
        top = msb_position(ident)
        return v._replace(elec=Elec(top, i, bit_position(i, ident), 0, v.elec.bit_position))
    if rule is RuleId.UPDATE:
        if ev.coh_p() and ev.up_p() and ev.wave_b():
            e = ev.parent.elec
            lost = 0 if e.phase == 1 else v.lost
            if bit_position(e.phase, ident) < e.bit_position:
                lost = 1
            return v._replace(elec=e, lost=lost)
        return v._replace(elec=v.elec._replace(control=1))
    if rule is RuleId.HYPER_BINADD:
        return v._replace(add=PLUS if ev.add_plus() else OK)
    if rule is RuleId.HYPER_BROAD:
        if ev.broad_db():
            bit = v.dB if v.add == OK else 1 - v.dB
            return v._replace(pl=(v.d, bit), add=None)
        return v._replace(pl=ev.parent.pl)
    if rule is RuleId.HYPER_VERIF:
        src = ev.parent.pl if v.d == 1 else ev.parent.hc
        return v._replace(hc=src)
    if rule is RuleId.HYPER_CLEANM:
        if ev.cleanm_v1a() or ev.cleanm_v1b():
            return v._replace(hc=CLEAN)
        if ev.cleanm_va() or ev.cleanm_vb():
            return v._replace(hc=None)
        return v._replace(pl=None)
    raise ValueError(f"unknown rule {rule!r}")


@lru_cache(maxsize=1 << 20)
def decide(view: NodeView) -> Tuple[Optional[RuleId], NodeState]:
    """Enabled rule and successor state for one node (memoised)."""
    ev = NodeEval(view)
    rule = _select(ev)
    if rule is None:
        return None, view.own
    return rule, _command(ev, rule)


def enabled_rule(view: NodeView) -> Optional[RuleId]:
    return decide(view)[0]


def apply_rule(view: NodeView, rule: RuleId) -> NodeState:
    got, nxt = decide(view)
    if got is not rule:
        raise ValueError(f"rule {rule.value} is not enabled (enabled: {got})")
    return nxt
