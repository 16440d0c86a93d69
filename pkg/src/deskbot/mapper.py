"""Object-to-ontology mapping: generated CRUD resources over the KB.

Given an ontology document (same triple format as KB load, restricted to
schema vocabulary), a mapper module is generated that exposes one resource
per class with create/read/update/delete/list operations. Components go
through mapper operations instead of touching triples, so they stay
decoupled from the store.

Vocabulary understood:

    C  rdf:type        rdfs:Class .
    C1 rdfs:subClassOf C2 .
    p  rdf:type        rdf:Property .
    p  rdf:type        mario:FunctionalProperty .
    p  rdfs:domain     C .
    p  rdfs:range      C | xsd:string|integer|decimal|boolean|time .

Classes referenced by subclass axioms are declared implicitly; domains and
ranges must resolve to declared classes or literal kinds.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from decimal import Decimal
from typing import Dict, List, Optional, Set, Tuple, Union

from deskbot.errors import (
    CyclicSubclass,
    DanglingReference,
    DuplicateModule,
    FunctionalViolation,
    ParseError,
    RangeViolation,
    UndeclaredProperty,
    UnknownClass,
    UnknownInstance,
)
from deskbot.kb.store import TripleStore
from deskbot.kb.terms import (
    RDF_TYPE,
    RDFS_DOMAIN,
    RDFS_RANGE,
    RDFS_SUBCLASS,
    Iri,
    Literal,
    LiteralKind,
    Pattern,
    PrefixMap,
    Triple,
    Variable,
    literal_to_python,
)
from deskbot.kb.textio import parse_document

TYPE = Iri(RDF_TYPE)
SUBCLASS = Iri(RDFS_SUBCLASS)
DOMAIN = Iri(RDFS_DOMAIN)
RANGE = Iri(RDFS_RANGE)
RDFS_CLASS = Iri("http://www.w3.org/2000/01/rdf-schema#Class")
RDF_PROPERTY = Iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#Property")
FUNCTIONAL = Iri("http://example.org/mario#FunctionalProperty")

_LITERAL_RANGES = {
    "http://www.w3.org/2001/XMLSchema#string": LiteralKind.STRING,
    "http://www.w3.org/2001/XMLSchema#integer": LiteralKind.INTEGER,
    "http://www.w3.org/2001/XMLSchema#decimal": LiteralKind.DECIMAL,
    "http://www.w3.org/2001/XMLSchema#boolean": LiteralKind.BOOLEAN,
    "http://www.w3.org/2001/XMLSchema#time": LiteralKind.TIME,
}


@dataclass(frozen=True)
class PropertySpec:
    iri: Iri
    kind: str                       # "object" | "data"
    domain: Optional[Iri] = None
    range_class: Optional[Iri] = None
    range_literal: Optional[LiteralKind] = None
    functional: bool = False


@dataclass
class OntologyModel:
    classes: Set[Iri]
    subclass_axioms: List[Tuple[Iri, Iri]]
    properties: Dict[Iri, PropertySpec]
    doc_hash: str
    prefixes: PrefixMap

    def superclasses(self, cls: Iri) -> Set[Iri]:
        """Reflexive-transitive superclasses within the model."""
        out = {cls}
        frontier = [cls]
        while frontier:
            cur = frontier.pop()
            for sub, sup in self.subclass_axioms:
                if sub == cur and sup not in out:
                    out.add(sup)
                    frontier.append(sup)
        return out


def load_ontology(text: str, kb: TripleStore,
                  prefixes: Optional[PrefixMap] = None,
                  source: str = "ontology") -> Tuple[OntologyModel, List[Triple]]:
    """Parse and validate an ontology document, asserting its axioms into
    the KB. Returns (model, newly added axiom triples)."""
    triples, pm = parse_document(text, prefixes)

    classes: Set[Iri] = set()
    subclass: List[Tuple[Iri, Iri]] = []
    declared_props: Set[Iri] = set()
    functional: Set[Iri] = set()
    domains: Dict[Iri, Iri] = {}
    ranges: Dict[Iri, Iri] = {}

    for t in triples:
        if t.p == TYPE and t.o == RDFS_CLASS:
            classes.add(t.s)
        elif t.p == TYPE and t.o == RDF_PROPERTY:
            declared_props.add(t.s)
        elif t.p == TYPE and t.o == FUNCTIONAL:
            functional.add(t.s)
        elif t.p == SUBCLASS:
            if not isinstance(t.o, Iri):
                raise ParseError(f"subclass object must be an IRI: {t}")
            subclass.append((t.s, t.o))
            classes.add(t.s)
            classes.add(t.o)
        elif t.p == DOMAIN:
            if not isinstance(t.o, Iri):
                raise ParseError(f"domain must be an IRI: {t}")
            domains[t.s] = t.o
        elif t.p == RANGE:
            if not isinstance(t.o, Iri):
                raise ParseError(f"range must be an IRI: {t}")
            ranges[t.s] = t.o
        else:
            raise ParseError(f"not schema vocabulary: {t.p.value}")

    # cycle check on the subclass graph
    adjacency: Dict[Iri, List[Iri]] = {}
    for sub, sup in subclass:
        adjacency.setdefault(sub, []).append(sup)
    state: Dict[Iri, int] = {}

    def visit(node: Iri, trail: List[Iri]):
        state[node] = 1
        for nxt in adjacency.get(node, ()):
            if state.get(nxt) == 1:
                raise CyclicSubclass(
                    " -> ".join(c.value for c in trail + [node, nxt]))
            if state.get(nxt, 0) == 0:
                visit(nxt, trail + [node])
        state[node] = 2

    for node in list(adjacency):
        if state.get(node, 0) == 0:
            visit(node, [])

    for prop in set(domains) | set(ranges) | functional:
        if prop not in declared_props:
            raise DanglingReference(f"{prop.value} used but not declared rdf:Property")
    for prop, cls in domains.items():
        if cls not in classes:
            raise DanglingReference(f"domain of {prop.value}: {cls.value} not a declared class")

    properties: Dict[Iri, PropertySpec] = {}
    for prop in sorted(declared_props, key=lambda p: p.value):
        rng = ranges.get(prop)
        range_class = None
        range_literal = None
        kind = "data"
        if rng is not None:
            if rng.value in _LITERAL_RANGES:
                range_literal = _LITERAL_RANGES[rng.value]
            elif rng in classes:
                range_class = rng
                kind = "object"
            else:
                raise DanglingReference(
                    f"range of {prop.value}: {rng.value} is neither a declared "
                    "class nor a literal kind")
        properties[prop] = PropertySpec(iri=prop, kind=kind,
                                        domain=domains.get(prop),
                                        range_class=range_class,
                                        range_literal=range_literal,
                                        functional=prop in functional)

    canonical = "\n".join(sorted(
        f"{t.s.value}|{t.p.value}|{t.o!r}" for t in triples))
    doc_hash = hashlib.sha256(canonical.encode()).hexdigest()

    model = OntologyModel(classes=classes, subclass_axioms=subclass,
                          properties=properties, doc_hash=doc_hash, prefixes=pm)
    result = kb.mutate(add=triples, source=source)
    return model, result.added


def _local_name(iri: Iri) -> str:
    value = iri.value
    for sep in ("#", "/"):
        if sep in value:
            value = value.rsplit(sep, 1)[1]
    return value or "thing"


class ResourceMapper:
    """CRUD resource set for one ontology."""

    def __init__(self, module_id: str, model: OntologyModel, kb: TripleStore):
        self.module_id = module_id
        self.model = model
        self.kb = kb
        self._counters: Dict[Iri, int] = {}
        self._ns = model.prefixes.expand("mario:")

    # -- helpers ---------------------------------------------------------------

    def _class_by_local(self, local: str) -> Iri:
        for cls in self.model.classes:
            if _local_name(cls) == local:
                return cls
        raise UnknownClass(f"no class {local!r} in module {self.module_id}")

    def class_locals(self) -> List[str]:
        return sorted(_local_name(c) for c in self.model.classes)

    def _resolve_class(self, cls: Union[Iri, str]) -> Iri:
        if isinstance(cls, str):
            try:
                cls = Iri(self.model.prefixes.expand(cls))
            except Exception:
                return self._class_by_local(cls)
        if cls not in self.model.classes:
            raise UnknownClass(f"{cls.value} not in module {self.module_id}")
        return cls

    def instance_iri(self, cls: Union[Iri, str], counter: int) -> Iri:
        cls = self._resolve_class(cls)
        return Iri(f"{self._ns}inst/{_local_name(cls)}/{counter}")

    def _spec_for(self, cls: Iri, prop_name: Union[Iri, str]) -> PropertySpec:
        if isinstance(prop_name, str):
            prop = Iri(self.model.prefixes.expand(prop_name))
        else:
            prop = prop_name
        spec = self.model.properties.get(prop)
        if spec is None:
            raise UndeclaredProperty(f"{prop.value} not declared in ontology")
        if spec.domain is not None and spec.domain not in self.model.superclasses(cls):
            raise UndeclaredProperty(
                f"{prop.value} has domain {spec.domain.value}, "
                f"not usable on {cls.value}")
        return spec

    def _coerce(self, spec: PropertySpec, value) -> Union[Iri, Literal]:
        if spec.kind == "object":
            if isinstance(value, Iri):
                return value
            if isinstance(value, str):
                return Iri(self.model.prefixes.expand(value))
            raise RangeViolation(f"{spec.iri.value}: expected an instance IRI")
        if spec.range_literal is None:
            if isinstance(value, Iri):
                return value
            if isinstance(value, str) and ":" in value and " " not in value:
                try:
                    return Iri(self.model.prefixes.expand(value))
                except Exception:
                    pass
            return _plain_literal(spec, value)
        kind = spec.range_literal
        if kind == LiteralKind.INTEGER:
            if isinstance(value, bool) or not isinstance(value, int):
                raise RangeViolation(f"{spec.iri.value}: expected integer, got {value!r}")
            return Literal(kind, value)
        if kind == LiteralKind.DECIMAL:
            if isinstance(value, bool) or not isinstance(value, (int, float, Decimal)):
                raise RangeViolation(f"{spec.iri.value}: expected decimal, got {value!r}")
            return Literal(kind, Decimal(str(value)))
        if kind == LiteralKind.BOOLEAN:
            if not isinstance(value, bool):
                raise RangeViolation(f"{spec.iri.value}: expected boolean, got {value!r}")
            return Literal(kind, value)
        if kind == LiteralKind.TIME:
            if not isinstance(value, str) or len(value) != 5 or value[2] != ":":
                raise RangeViolation(f"{spec.iri.value}: expected \"HH:MM\", got {value!r}")
            return Literal(kind, value)
        if not isinstance(value, str):
            raise RangeViolation(f"{spec.iri.value}: expected string, got {value!r}")
        return Literal(kind, value)

    def _prop_triples(self, iri: Iri, cls: Iri, props: Dict) -> List[Triple]:
        out = []
        for name, value in sorted(props.items()):
            spec = self._spec_for(cls, name)
            values = value if isinstance(value, list) else [value]
            if spec.functional and len(values) > 1:
                raise FunctionalViolation(f"{spec.iri.value} is functional")
            for v in values:
                out.append(Triple(iri, spec.iri, self._coerce(spec, v)))
        return out

    def _asserted_class(self, iri: Iri) -> Optional[Iri]:
        for t in self.kb.asserted_triples():
            if t.s == iri and t.p == TYPE and t.o in self.model.classes:
                return t.o
        return None

    # -- CRUD ---------------------------------------------------------------------

    def create(self, cls: Union[Iri, str], props: Optional[Dict] = None) -> str:
        cls = self._resolve_class(cls)
        props = props or {}
        counter = self._counters.get(cls, 0) + 1
        iri = self.instance_iri(cls, counter)
        triples = [Triple(iri, TYPE, cls)] + self._prop_triples(iri, cls, props)
        self.kb.mutate(add=triples, source=self.module_id)
        self._counters[cls] = counter
        return self.model.prefixes.compact(iri.value)

    def _require_instance(self, iri_text: str) -> Tuple[Iri, Iri]:
        iri = Iri(self.model.prefixes.expand(iri_text))
        cls = self._asserted_class(iri)
        if cls is None:
            raise UnknownInstance(f"{iri.value} is not a live instance")
        return iri, cls

    def read(self, iri_text: str) -> Dict:
        iri, cls = self._require_instance(iri_text)
        props: Dict[str, object] = {}
        multi: Dict[str, List] = {}
        for t in sorted(self.kb.asserted_triples(),
                        key=lambda t: (t.p.value, repr(t.o))):
            if t.s != iri or t.p == TYPE:
                continue
            spec = self.model.properties.get(t.p)
            if spec is None:
                continue
            value = (self.model.prefixes.compact(t.o.value)
                     if isinstance(t.o, Iri) else literal_to_python(t.o))
            name = self.model.prefixes.compact(t.p.value)
            if spec.functional:
                props[name] = value
            else:
                multi.setdefault(name, []).append(value)
        for name, values in multi.items():
            props[name] = values[0] if len(values) == 1 else values
        return {"iri": self.model.prefixes.compact(iri.value),
                "class": self.model.prefixes.compact(cls.value),
                "props": props}

    def update(self, iri_text: str, props: Dict) -> Dict:
        iri, cls = self._require_instance(iri_text)
        add = self._prop_triples(iri, cls, props)
        remove = []
        for name in props:
            spec = self._spec_for(cls, name)
            if spec.functional:
                remove.extend(t for t in self.kb.asserted_triples()
                              if t.s == iri and t.p == spec.iri)
        remove = [t for t in remove if t not in add]
        add = [t for t in add if not self.kb.has_asserted(t)]
        self.kb.mutate(add=add, remove=remove, source=self.module_id)
        return self.read(iri_text)

    def remove_value(self, iri_text: str, prop: str, value) -> None:
        iri, cls = self._require_instance(iri_text)
        spec = self._spec_for(cls, prop)
        self.kb.mutate(remove=[Triple(iri, spec.iri, self._coerce(spec, value))],
                       source=self.module_id)

    def delete(self, iri_text: str) -> None:
        iri, _ = self._require_instance(iri_text)
        self.kb.retract_subject(iri, source=self.module_id)

    def list_instances(self, cls: Union[Iri, str]) -> List[str]:
        """Instances of the class or any subclass (via the KB closure)."""
        cls = self._resolve_class(cls)
        hits = self.kb.query([Pattern(Variable("x"), TYPE, cls)])
        out = []
        for binding in hits:
            subject = binding["x"]
            if isinstance(subject, Iri) and self._asserted_class(subject) is not None:
                out.append(self.model.prefixes.compact(subject.value))
        return sorted(out)


def _plain_literal(spec: PropertySpec, value) -> Literal:
    from deskbot.kb.terms import literal_from_python
    try:
        return literal_from_python(value)
    except Exception:
        raise RangeViolation(f"{spec.iri.value}: unsupported value {value!r}") from None


class MapperManager:
    """Registry of generated mapper modules, one per ontology document."""

    def __init__(self, kb: TripleStore, prefixes: Optional[PrefixMap] = None):
        self.kb = kb
        self.prefixes = prefixes or PrefixMap()
        self._by_id: Dict[str, ResourceMapper] = {}
        self._by_hash: Dict[str, str] = {}
        self._axioms: Dict[str, List[Triple]] = {}

    def generate_from_document(self, text: str, module_id: Optional[str] = None,
                               source: str = "mapper") -> ResourceMapper:
        model, added = load_ontology(text, self.kb, self.prefixes, source=source)
        return self.generate(model, module_id=module_id, added_axioms=added)

    def generate(self, model: OntologyModel, module_id: Optional[str] = None,
                 added_axioms: Optional[List[Triple]] = None) -> ResourceMapper:
        existing_id = self._by_hash.get(model.doc_hash)
        if existing_id is not None:
            if module_id is not None and module_id != existing_id:
                raise DuplicateModule(
                    f"ontology already mapped as {existing_id!r}")
            return self._by_id[existing_id]
        module_id = module_id or f"map-{model.doc_hash[:8]}"
        if module_id in self._by_id:
            raise DuplicateModule(f"module id {module_id!r} already in use")
        mapper = ResourceMapper(module_id, model, self.kb)
        self._by_id[module_id] = mapper
        self._by_hash[model.doc_hash] = module_id
        self._axioms[module_id] = list(added_axioms or [])
        return mapper

    def drop(self, module_id: str) -> None:
        """Deregister a mapper and retract the axioms its load added."""
        mapper = self._by_id.pop(module_id, None)
        if mapper is None:
            return
        self._by_hash.pop(mapper.model.doc_hash, None)
        axioms = self._axioms.pop(module_id, [])
        still_asserted = [t for t in axioms if self.kb.has_asserted(t)]
        if still_asserted:
            self.kb.mutate(remove=still_asserted, source=module_id)

    def get(self, module_id: str) -> ResourceMapper:
        try:
            return self._by_id[module_id]
        except KeyError:
            raise UnknownInstance(f"no mapper module {module_id!r}") from None

    def module_ids(self) -> List[str]:
        return sorted(self._by_id)
