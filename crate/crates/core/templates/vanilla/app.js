(function () {
  "use strict";

  var state = { config: null, query: "", page: 0, perPage: 20, pending: null };
  var el = function (id) { return document.getElementById(id); };

  function showBanner(message) {
    var banner = el("banner");
    banner.textContent = message;
    banner.hidden = false;
  }

  function clearBanner() {
    el("banner").hidden = true;
  }

  // Snippets mark matches with U+27E6 / U+27E7.
  function appendSnippet(parent, snippet) {
    var parts = snippet.split(/(⟦[^⟧]*⟧)/);
    parts.forEach(function (part) {
      if (part.charAt(0) === "⟦") {
        var mark = document.createElement("mark");
        mark.textContent = part.slice(1, -1);
        parent.appendChild(mark);
      } else if (part) {
        parent.appendChild(document.createTextNode(part));
      }
    });
  }

  function renderRows(body) {
    var list = el("results");
    list.textContent = "";
    list.start = body.page * body.per_page + 1;
    body.rows.forEach(function (row) {
      var item = document.createElement("li");
      var head = document.createElement("div");
      var id = document.createElement("span");
      id.className = "doc-id";
      id.textContent = row.id;
      var score = document.createElement("span");
      score.className = "score";
      score.textContent = row.score.toFixed(3);
      head.appendChild(id);
      head.appendChild(score);
      var text = document.createElement("p");
      appendSnippet(text, row.snippet);
      item.appendChild(head);
      item.appendChild(text);
      var field = state.config.metadata_field;
      if (row.metadata && row.metadata[field] !== undefined) {
        var meta = document.createElement("div");
        meta.className = "meta";
        meta.textContent = field + ": " + row.metadata[field];
        item.appendChild(meta);
      }
      list.appendChild(item);
    });
  }

  function renderPager(body) {
    var pager = el("pager");
    pager.textContent = "";
    var pages = Math.max(1, Math.ceil(body.total_results / body.per_page));
    function add(label, target) {
      var button = document.createElement("button");
      button.type = "button";
      button.textContent = label;
      button.disabled = target === body.page || target < 0 || target >= pages;
      button.addEventListener("click", function () { go(state.query, target); });
      pager.appendChild(button);
    }
    add("first", 0);
    add("prev", body.page - 1);
    for (var p = Math.max(0, body.page - 3); p < Math.min(pages, body.page + 4); p++) {
      add(String(p + 1), p);
    }
    add("next", body.page + 1);
    add("last", pages - 1);
  }

  function search() {
    if (!state.query) { return; }
    if (state.pending) { state.pending.abort(); }
    var controller = new AbortController();
    state.pending = controller;
    var url = state.config.service_url.replace(/\/$/, "") + "/search?q=" +
      encodeURIComponent(state.query) + "&page=" + state.page + "&per_page=" + state.perPage;
    fetch(url, { signal: controller.signal })
      .then(function (response) {
        return response.json().then(function (body) {
          if (!response.ok) { throw new Error(body.detail || body.error || response.statusText); }
          return body;
        });
      })
      .then(function (body) {
        if (state.pending !== controller) { return; }
        clearBanner();
        el("summary").textContent = body.total_results + " results";
        renderRows(body);
        renderPager(body);
      })
      .catch(function (err) {
        if (err.name === "AbortError") { return; }
        showBanner("Search failed: " + err.message);
      });
  }

  function go(query, page) {
    location.hash = "q=" + encodeURIComponent(query) + "&page=" + page;
  }

  function readHash() {
    var params = new URLSearchParams(location.hash.slice(1));
    state.query = params.get("q") || "";
    state.page = Math.max(0, parseInt(params.get("page") || "0", 10) || 0);
    el("query").value = state.query;
    search();
  }

  fetch("config.json")
    .then(function (response) { return response.json(); })
    .then(function (config) {
      state.config = config;
      el("search-form").addEventListener("submit", function (event) {
        event.preventDefault();
        go(el("query").value.trim(), 0);
      });
      window.addEventListener("hashchange", readHash);
      readHash();
    })
    .catch(function (err) { showBanner("Cannot load config.json: " + err.message); });
})();
