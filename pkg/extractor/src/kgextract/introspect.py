"""Build the documentation knowledge-base document by introspecting a library.

Catalogue nodes mirror the package/module hierarchy; callable nodes cover
the exported API: functions, classes, and each class's documented methods.

Export rules, applied per module:
  - a module with a declared ``__all__`` exports exactly those names;
  - a module with no ``__all__`` anywhere above it (an uncurated library)
    exports its own public top-level functions and classes;
  - a module without ``__all__`` inside a curated library is treated as an
    implementation detail and contributes nothing directly — objects it
    defines surface through whichever curated module re-exports them.

Each exported object becomes one node, attached to the exporting module
closest to where the object is defined, so re-exports never duplicate.
"""

from __future__ import annotations

import contextlib
import fnmatch
import importlib
import inspect
import io
import json
import pkgutil
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone

DEFAULT_SUMMARY_CAP = 400
DEFAULT_EXCLUDE = ("*.tests", "*.tests.*", "*.benchmarks", "*.benchmarks.*")


class ExtractionError(Exception):
    pass


@dataclass
class ExtractionConfig:
    library: str
    version: str
    output_path: str
    include: tuple[str, ...] = ("*",)
    exclude: tuple[str, ...] = DEFAULT_EXCLUDE
    skip_private: bool = True
    summary_cap: int = DEFAULT_SUMMARY_CAP
    require_method_doc: bool = True

    def __post_init__(self):
        if not self.library:
            raise ExtractionError("library name is required")
        if not self.version:
            raise ExtractionError("version must be pinned to an exact string")
        if self.summary_cap <= 0:
            raise ExtractionError("summary cap must be positive")
        if not self.output_path:
            raise ExtractionError("output path is required")


def summarize_catalogue(doc: str | None, member_names: list[str], cap: int) -> str:
    """First docstring paragraph, or a member listing when there is none.

    Always non-empty and at most ``cap`` characters; truncation happens on a
    word boundary.
    """
    text = (doc or "").strip()
    if text:
        summary = text.split("\n\n", 1)[0].strip()
        summary = " ".join(summary.split())
    else:
        summary = "Contains: " + ", ".join(member_names) if member_names else "(no description)"
    return _truncate_words(summary, cap)


def _truncate_words(text: str, cap: int) -> str:
    if len(text) <= cap:
        return text
    clipped = text[:cap]
    if " " in clipped:
        clipped = clipped.rsplit(" ", 1)[0]
    return clipped.rstrip(",;: ")


def first_doc_paragraph(obj, cap: int) -> str:
    doc = inspect.getdoc(obj) or ""
    if not doc.strip():
        return ""
    paragraph = " ".join(doc.strip().split("\n\n", 1)[0].split())
    return _truncate_words(paragraph, cap)


def _signature_text(name: str, obj) -> str:
    try:
        return f"{name}{inspect.signature(obj)}"
    except (ValueError, TypeError):
        return f"{name}(...)"


@dataclass
class _Module:
    name: str
    module: object
    is_package: bool
    exports: list[str] = field(default_factory=list)
    declared: bool = False  # has an explicit __all__


def _iter_module_infos(root) -> list[tuple[str, bool]]:
    found = []
    if hasattr(root, "__path__"):
        for info in pkgutil.walk_packages(root.__path__, prefix=root.__name__ + "."):
            found.append((info.name, info.ispkg))
    return found


def _import_quietly(name: str):
    with warnings.catch_warnings(), contextlib.redirect_stdout(io.StringIO()):
        warnings.simplefilter("ignore")
        return importlib.import_module(name)


def _matches(name: str, patterns: tuple[str, ...]) -> bool:
    return any(fnmatch.fnmatchcase(name, pattern) for pattern in patterns)


def discover_modules(config: ExtractionConfig) -> dict[str, _Module]:
    """Import every public module of the library that passes the filters."""
    try:
        root = _import_quietly(config.library)
    except ImportError as exc:
        raise ExtractionError(f"library {config.library!r} is not importable: {exc}") from exc
    installed = getattr(root, "__version__", None)
    if installed != config.version:
        raise ExtractionError(
            f"version mismatch: config pins {config.version!r} but "
            f"{config.library!r} {installed!r} is installed"
        )
    modules: dict[str, _Module] = {
        config.library: _Module(config.library, root, hasattr(root, "__path__"))
    }
    for name, is_package in sorted(_iter_module_infos(root)):
        segments = name.split(".")
        if config.skip_private and any(s.startswith("_") for s in segments):
            continue
        if _matches(name, config.exclude) or not _matches(name, config.include):
            continue
        try:
            module = _import_quietly(name)
        except Exception:
            continue  # optional dependencies and import-time failures
        modules[name] = _Module(name, module, is_package)
    return modules


def _resolve_exports(modules: dict[str, _Module], config: ExtractionConfig) -> None:
    curated = {n for n, m in modules.items() if getattr(m.module, "__all__", None) is not None}

    def has_curated_ancestor(name: str) -> bool:
        parts = name.split(".")
        return any(".".join(parts[:i]) in curated for i in range(1, len(parts) + 1))

    for name, entry in modules.items():
        declared = getattr(entry.module, "__all__", None)
        if declared is not None:
            entry.declared = True
            exports = [n for n in declared if isinstance(n, str)]
        elif has_curated_ancestor(name):
            continue  # implementation detail of a curated library
        else:
            exports = [
                n
                for n, obj in vars(entry.module).items()
                if (inspect.isfunction(obj) or inspect.isclass(obj))
                and getattr(obj, "__module__", None) == name
            ]
        if config.skip_private:
            exports = [n for n in exports if not n.startswith("_")]
        entry.exports = sorted(set(exports))


def _common_segments(a: str, b: str) -> int:
    count = 0
    for left, right in zip(a.split("."), b.split(".")):
        if left != right:
            break
        count += 1
    return count


@dataclass
class _Attachment:
    export_name: str
    obj: object
    home: str  # dotted module path of the owning catalogue


def _attach_objects(modules: dict[str, _Module], config: ExtractionConfig) -> list[_Attachment]:
    """One attachment per unique exported object, nearest to its definition."""
    candidates: dict[tuple[str, str], list[tuple[str, str, object]]] = {}
    for name in sorted(modules):
        entry = modules[name]
        for export in entry.exports:
            obj = getattr(entry.module, export, None)
            if obj is None or not (inspect.isfunction(obj) or inspect.isclass(obj)):
                continue
            defining = getattr(obj, "__module__", "") or ""
            if defining != config.library and not defining.startswith(config.library + "."):
                continue
            key = (defining, getattr(obj, "__qualname__", export))
            candidates.setdefault(key, []).append((name, export, obj))

    attachments: list[_Attachment] = []
    for (defining, _qualname), options in sorted(candidates.items()):
        options.sort(
            key=lambda opt: (
                -_common_segments(opt[0], defining),
                -len(opt[0].split(".")),
                opt[0],
                opt[1],
            )
        )
        module_name, export, obj = options[0]
        attachments.append(_Attachment(export_name=export, obj=obj, home=module_name))
    return attachments


def _method_members(cls, config: ExtractionConfig) -> list[tuple[str, object]]:
    members = []
    for name, raw in sorted(vars(cls).items()):
        if name.startswith("_"):
            continue
        if isinstance(raw, (classmethod, staticmethod)):
            fn = raw.__func__
        elif inspect.isfunction(raw):
            fn = raw
        else:
            continue
        if config.require_method_doc and not (fn.__doc__ or "").strip():
            continue
        members.append((name, fn))
    return members


def build_document(config: ExtractionConfig) -> dict:
    """Extract the library and return the knowledge-base document."""
    modules = discover_modules(config)
    _resolve_exports(modules, config)
    attachments = _attach_objects(modules, config)

    catalogue_names = {n for n, m in modules.items() if m.is_package}
    catalogue_names |= {n for n, m in modules.items() if m.exports}
    for name in list(catalogue_names):
        parts = name.split(".")
        for i in range(1, len(parts) + 1):
            ancestor = ".".join(parts[:i])
            if ancestor in modules:
                catalogue_names.add(ancestor)

    def catalogue_id(dotted: str) -> str:
        return dotted.replace(".", "/")

    children: dict[str, list[str]] = {n: [] for n in sorted(catalogue_names)}
    for name in sorted(catalogue_names):
        if "." in name:
            parent = name.rsplit(".", 1)[0]
            if parent in children:
                children[parent].append(catalogue_id(name))

    nodes: list[dict] = []
    callable_ids: set[str] = set()

    def add_callable(home: str, name: str, obj, kind: str) -> str | None:
        node_id = f"{catalogue_id(home)}/{name}"
        if node_id in callable_ids:
            return None
        callable_ids.add(node_id)
        nodes.append(
            {
                "id": node_id,
                "kind": "callable",
                "callable_kind": kind,
                "name": name,
                "signature": _signature_text(name.rsplit(".", 1)[-1], obj),
                "doc": first_doc_paragraph(obj, config.summary_cap),
            }
        )
        children[home].append(node_id)
        return node_id

    for attachment in attachments:
        home = attachment.home
        if home not in children:
            continue  # exporting module was filtered out of the catalogue set
        obj = attachment.obj
        if inspect.isclass(obj):
            class_id = add_callable(home, attachment.export_name, obj, "class")
            if class_id is None:
                continue
            for method_name, fn in _method_members(obj, config):
                add_callable(home, f"{attachment.export_name}.{method_name}", fn, "method")
        else:
            add_callable(home, attachment.export_name, obj, "function")

    for name in sorted(catalogue_names):
        member_names = [cid.rsplit("/", 1)[-1] for cid in children[name]]
        nodes.append(
            {
                "id": catalogue_id(name),
                "kind": "catalogue",
                "title": name.rsplit(".", 1)[-1],
                "summary": summarize_catalogue(
                    getattr(modules[name].module, "__doc__", None), member_names,
                    config.summary_cap,
                ),
                "children": sorted(children[name]),
            }
        )

    nodes.sort(key=lambda n: n["id"])
    return {
        "metadata": {
            "library": config.library,
            "version": config.version,
            "extracted_at": datetime.now(timezone.utc).isoformat(),
        },
        "roots": [catalogue_id(config.library)],
        "nodes": nodes,
    }


def extract_graph(config: ExtractionConfig) -> dict:
    """Run the extraction and write the document to the configured path.

    Returns summary counts: catalogue nodes, callable nodes, output path.
    """
    document = build_document(config)
    try:
        with open(config.output_path, "w", encoding="utf-8") as fh:
            json.dump(document, fh, ensure_ascii=False, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise ExtractionError(f"cannot write {config.output_path!r}: {exc}") from exc
    catalogues = sum(1 for n in document["nodes"] if n["kind"] == "catalogue")
    callables = sum(1 for n in document["nodes"] if n["kind"] == "callable")
    return {
        "catalogues": catalogues,
        "callables": callables,
        "output_path": config.output_path,
    }
