"""
MiniWebShop: a deterministic, catalog-backed shopping website.

Action grammar:
    search[<query>]
    click[<item id>] | click[<option value>] | click[Buy Now]
    click[Next >] | click[< Prev] | click[< Back] | click[Back to Search]
    click[Description] | click[Features] | click[Reviews] | click[Attributes]

``click [X]`` with a space is accepted. Unknown or misplaced actions keep
the current page and prepend an ``Invalid action`` banner.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Set

from .environments import INVALID_ACTION, EnvResult, Environment

logger = logging.getLogger(__name__)

ACTION_RE = re.compile(r"^\s*(search|click)\s*\[(.*)\]\s*$", re.DOTALL)
TOKEN_RE = re.compile(r"[a-z0-9]+")

SEARCH = "search"
RESULTS = "results"
ITEM = "item"
SECTION = "section"
SECTIONS = ("Description", "Features", "Reviews", "Attributes")

TASK_TEMPLATE = (
    "Navigate a shopping website to purchase an item matching the following request: {instruction}"
)


@dataclass(frozen=True)
class CatalogItem:
    id: str
    title: str
    price: float
    attributes: Set[str] = field(default_factory=frozenset)
    options: Dict[str, List[str]] = field(default_factory=dict)
    description: str = ""
    features: str = ""
    reviews: str = ""

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CatalogItem":
        return cls(
            id=data["id"],
            title=data["title"],
            price=float(data["price"]),
            attributes=frozenset(a.lower() for a in data.get("attributes", [])),
            options={name: list(values) for name, values in data.get("options", {}).items()},
            description=data.get("description", ""),
            features=data.get("features", ""),
            reviews=data.get("reviews", ""),
        )

    def tokens(self) -> Set[str]:
        found = set(tokenize(self.title))
        for attribute in self.attributes:
            found.update(tokenize(attribute))
        return found


@dataclass(frozen=True)
class ShopTask:
    instruction: str
    required_attributes: Set[str]
    max_price: float
    required_options: Dict[str, str] = field(default_factory=dict)
    target_ids: Set[str] = field(default_factory=frozenset)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ShopTask":
        return cls(
            instruction=data["instruction"],
            required_attributes=frozenset(a.lower() for a in data.get("required_attributes", [])),
            max_price=float(data["max_price"]),
            required_options={k: v for k, v in data.get("required_options", {}).items()},
            target_ids=frozenset(data.get("target_ids", [])),
        )


def tokenize(text: str) -> List[str]:
    return TOKEN_RE.findall(text.lower())


def format_price(price: float) -> str:
    return f"${price:.2f}"


def score_purchase(task: ShopTask, item: CatalogItem, selected: Dict[str, Optional[str]]) -> float:
    """Share of attribute, price and option requirements the purchase meets."""
    matched = len(task.required_attributes & item.attributes)
    matched += 1 if item.price <= task.max_price else 0
    for name, value in task.required_options.items():
        chosen = selected.get(name)
        if chosen is not None and chosen.lower() == value.lower():
            matched += 1
    total = len(task.required_attributes) + 1 + len(task.required_options)
    return matched / total


def render_search_page(instruction: str) -> str:
    return "\n".join(["WebShop", "Instruction:", instruction, "[Search]"])


def render_results_page(catalog: Dict[str, CatalogItem], results: List[str], page: int, per_page: int) -> str:
    """
    Render one page of search results.

    Args:
        catalog: Items by id
        results: Ranked result ids
        page: 1-based page number
        per_page: Items per page

    Returns:
        Page text
    """
    lines = ["[Back to Search]", f"Page {page} (Total results: {len(results)})"]
    if page > 1:
        lines.append("[< Prev]")
    if page * per_page < len(results):
        lines.append("[Next >]")
    for item_id in results[(page - 1) * per_page : page * per_page]:
        item = catalog[item_id]
        lines.extend([f"[{item.id}]", item.title, format_price(item.price)])
    return "\n".join(lines)


def render_item_page(item: CatalogItem, selected: Dict[str, Optional[str]]) -> str:
    """Render an item page: option rows, title, price, section links and buy button."""
    lines = ["[Back to Search]", "[< Prev]"]
    for name, values in item.options.items():
        lines.append(f"{name} " + "".join(f"[{value}]" for value in values))
    lines.extend([item.title, f"Price: {format_price(item.price)}", "Rating: N.A."])
    lines.extend(f"[{section}]" for section in SECTIONS)
    missing = [name for name in item.options if selected.get(name) is None]
    if missing:
        lines.append(
            f"[Buy Now] (You must select buying variation for {', '.join(missing)} "
            "before buying this product)"
        )
    else:
        lines.append("[Buy Now]")
    if item.options:
        chosen = ", ".join(f"{name}: {selected.get(name)}" for name in item.options)
        lines.append(f"Selected Buying Variation Options: {chosen}")
    return "\n".join(lines)


def render_section_page(item: CatalogItem, section: str) -> str:
    if section == "Attributes":
        body = "\n".join(sorted(item.attributes))
    else:
        body = getattr(item, section.lower())
    return "\n".join(["[Back to Search]", "[< Prev]", body])


class MiniWebShop(Environment):
    """WebShop-style store over a fixed catalog, one task per episode."""

    name = "minishop"

    def __init__(self, catalog: List[Dict[str, Any]], tasks: List[Dict[str, Any]], results_per_page: int = 3):
        super().__init__()
        items = [CatalogItem.from_dict(entry) for entry in catalog]
        self.catalog: Dict[str, CatalogItem] = {item.id: item for item in items}
        self.item_tokens = {item.id: item.tokens() for item in items}
        self.tasks = [ShopTask.from_dict(entry) for entry in tasks]
        self.results_per_page = results_per_page
        self.task: Optional[ShopTask] = None
        self.page_kind = SEARCH
        self.results: List[str] = []
        self.page = 1
        self.item_id: Optional[str] = None
        self.section: Optional[str] = None
        self.selected: Dict[str, Optional[str]] = {}
        self.purchased: Optional[str] = None

    def task_count(self) -> int:
        return len(self.tasks)

    def task_text(self, task_id: Any = 0) -> str:
        return TASK_TEMPLATE.format(instruction=self.tasks[task_id or 0].instruction)

    def search(self, query: str) -> List[str]:
        """Ids ranked by shared tokens with the query, ties by id."""
        wanted = set(tokenize(query))
        scored = []
        for item_id, tokens in self.item_tokens.items():
            overlap = len(wanted & tokens)
            if overlap:
                scored.append((-overlap, item_id))
        return [item_id for _, item_id in sorted(scored)]

    def current_page(self) -> str:
        if self.page_kind == SEARCH:
            return render_search_page(self.task.instruction)
        if self.page_kind == RESULTS:
            return render_results_page(self.catalog, self.results, self.page, self.results_per_page)
        item = self.catalog[self.item_id]
        if self.page_kind == SECTION:
            return render_section_page(item, self.section)
        return render_item_page(item, self.selected)

    def page_ids(self) -> List[str]:
        start = (self.page - 1) * self.results_per_page
        return self.results[start : start + self.results_per_page]

    def last_page(self) -> int:
        return max(1, -(-len(self.results) // self.results_per_page))

    def _reset(self, task_id: Any) -> str:
        self.task = self.tasks[task_id or 0]
        self.page_kind = SEARCH
        self.results = []
        self.page = 1
        self.item_id = None
        self.section = None
        self.selected = {}
        self.purchased = None
        return self.current_page()

    def _invalid(self, action: str, reason: str = "") -> EnvResult:
        banner = f"{INVALID_ACTION}: {action}" + (f" ({reason})" if reason else "")
        logger.debug(banner)
        return EnvResult(obs=f"{banner}\n{self.current_page()}")

    def _step(self, action: str) -> EnvResult:
        match = ACTION_RE.match(action)
        if not match:
            return self._invalid(action)
        verb, argument = match.group(1), match.group(2).strip()

        if verb == "search":
            if self.page_kind != SEARCH:
                return self._invalid(action, "search is only available on the search page")
            self.results = self.search(argument)
            self.page = 1
            self.page_kind = RESULTS
            return EnvResult(obs=self.current_page())

        if argument == "Back to Search":
            self.page_kind = SEARCH
            self.results = []
            self.page = 1
            return EnvResult(obs=self.current_page())
        if argument in ("< Prev", "< Back"):
            return self._previous(action)
        if argument == "Next >":
            if self.page_kind != RESULTS:
                return self._invalid(action)
            if self.page >= self.last_page():
                return self._invalid(action, "already on the last page")
            self.page += 1
            return EnvResult(obs=self.current_page())
        if self.page_kind == RESULTS:
            if argument in self.page_ids():
                self._open_item(argument)
                return EnvResult(obs=self.current_page())
            return self._invalid(action, "no such item on this page")
        if self.page_kind == ITEM:
            return self._item_click(action, argument)
        return self._invalid(action)

    def _previous(self, action: str) -> EnvResult:
        if self.page_kind == SECTION:
            self.page_kind = ITEM
            self.section = None
        elif self.page_kind == ITEM:
            self.page_kind = RESULTS
            self.item_id = None
        elif self.page_kind == RESULTS:
            if self.page <= 1:
                return self._invalid(action, "already on the first page")
            self.page -= 1
        else:
            return self._invalid(action)
        return EnvResult(obs=self.current_page())

    def _open_item(self, item_id: str):
        self.page_kind = ITEM
        self.item_id = item_id
        self.selected = {name: None for name in self.catalog[item_id].options}

    def _item_click(self, action: str, argument: str) -> EnvResult:
        item = self.catalog[self.item_id]
        if argument == "Buy Now":
            self.purchased = item.id
            reward = score_purchase(self.task, item, self.selected)
            logger.info(f"Purchased {item.id} with reward {reward:.3f}")
            obs = f"Thank you for shopping with us!\nYour score (min 0.0, max 1.0): {reward:g}"
            return EnvResult(obs=obs, reward=reward, done=True)
        if argument in SECTIONS:
            self.page_kind = SECTION
            self.section = argument
            return EnvResult(obs=self.current_page())
        for name, values in item.options.items():
            if argument in values:
                self.selected[name] = argument
                return EnvResult(obs=self.current_page())
        return self._invalid(action, "no such option on this page")
