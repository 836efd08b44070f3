use gdt_core::TemplatePool;

pub const POOL: &str = r#"{
  "types": ["path", "text", "address", "person"],
  "catalog": {
    "path": ["/tmp/a", "/tmp/b"],
    "text": ["hello", "world"],
    "person": ["Ada", "Alan"]
  },
  "templates": [
    {
      "id": "write",
      "description": "Write \"{body}\" to {file}.",
      "attributes": {"file": "path", "body": "text"},
      "output_type": "path",
      "output": {"from": "attribute", "attribute": "file"},
      "platform": "desktop",
      "evaluator": [
        {"env": "desktop", "predicate": "exists", "args": {"path": {"$attr": "file"}}},
        {"env": "desktop", "predicate": "content", "args": {"path": {"$attr": "file"}, "text": {"$attr": "body"}}}
      ]
    },
    {
      "id": "read",
      "description": "Read {file}.",
      "attributes": {"file": "path"},
      "output_type": "text",
      "output": {"from": "query", "env": "desktop", "action": "cat", "args": {"path": {"$attr": "file"}}},
      "platform": "desktop",
      "evaluator": [
        {"env": "desktop", "predicate": "opened", "args": {"path": {"$attr": "file"}}}
      ]
    },
    {
      "id": "lookup",
      "description": "Find the address of {who}.",
      "attributes": {"who": "person"},
      "output_type": "address",
      "output": {"from": "query", "env": "phone", "action": "lookup", "args": {"name": {"$attr": "who"}}},
      "platform": "phone",
      "evaluator": [
        {"env": "phone", "predicate": "in_app", "args": {"app": "contacts"}}
      ]
    },
    {
      "id": "mail",
      "description": "Mail {to} saying \"{body}\".",
      "attributes": {"to": "address", "body": "text"},
      "platform": "phone",
      "evaluator": [
        {"env": "phone", "predicate": "in_app", "args": {"app": "mail"}},
        {"env": "phone", "predicate": "sent", "args": {"to": {"$attr": "to"}, "body": {"$attr": "body"}}}
      ]
    }
  ]
}"#;

pub fn pool() -> TemplatePool {
    TemplatePool::from_json(POOL).expect("test pool loads")
}

